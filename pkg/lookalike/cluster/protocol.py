"""
Wire formats for similar-address queries and cooperative transfer

Query datagram (45 octets):

    0-3    magic "ECQ1"
    4      n_match
    5-44   target address, 40 lowercase hex ASCII octets

Response datagram (45 octets on hit, 5 otherwise):

    0-3    magic "ECR1"
    4      status: 0x01 hit, 0x00 miss, 0xFF error
    5-44   substitute address (hit only)

Transfer batch (stream):

    0-3    magic "ECT1"
    4-7    record count, unsigned big-endian
    8-     count x 104-octet records

Transfer ack (12 octets): "ECA1", accepted count, ignored count (unsigned big-endian).
"""

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Optional

from ..core.accounts import ADDRESS_HEX_LENGTH, RECORD_SIZE, Address
from ..core.errors import ProtocolError

QUERY_MAGIC = b"ECQ1"
RESPONSE_MAGIC = b"ECR1"
TRANSFER_MAGIC = b"ECT1"
ACK_MAGIC = b"ECA1"

QUERY_SIZE = 4 + 1 + ADDRESS_HEX_LENGTH
HIT_RESPONSE_SIZE = 4 + 1 + ADDRESS_HEX_LENGTH
SHORT_RESPONSE_SIZE = 4 + 1

_BATCH_HEADER = struct.Struct(">4sI")
_ACK = struct.Struct(">4sII")
BATCH_HEADER_SIZE = _BATCH_HEADER.size
ACK_SIZE = _ACK.size

_HEX_OCTETS = frozenset(b"0123456789abcdef")


class QueryStatus(IntEnum):
    MISS = 0x00
    HIT = 0x01
    ERROR = 0xFF


def _decode_address(raw: bytes) -> Address:
    if len(raw) != ADDRESS_HEX_LENGTH or not _HEX_OCTETS.issuperset(raw):
        raise ProtocolError("address field must be 40 lowercase hex octets")
    return Address(raw.decode("ascii"))


@dataclass(frozen=True)
class QueryRequest:
    n_match: int
    target: Address

    def encode(self) -> bytes:
        if not 0 < self.n_match < 256:
            raise ProtocolError("n_match must fit one octet")
        return QUERY_MAGIC + bytes([self.n_match]) + self.target.value.encode("ascii")

    @classmethod
    def decode(cls, data: bytes) -> "QueryRequest":
        if len(data) != QUERY_SIZE:
            raise ProtocolError(f"query must be {QUERY_SIZE} octets, got {len(data)}")
        if data[:4] != QUERY_MAGIC:
            raise ProtocolError("bad query magic")
        return cls(n_match=data[4], target=_decode_address(data[5:]))


@dataclass(frozen=True)
class QueryResponse:
    status: QueryStatus
    substitute: Optional[Address] = None

    @classmethod
    def hit(cls, substitute: Address) -> "QueryResponse":
        return cls(QueryStatus.HIT, substitute)

    @classmethod
    def miss(cls) -> "QueryResponse":
        return cls(QueryStatus.MISS)

    @classmethod
    def error(cls) -> "QueryResponse":
        return cls(QueryStatus.ERROR)

    def encode(self) -> bytes:
        head = RESPONSE_MAGIC + bytes([self.status])
        if self.status is QueryStatus.HIT:
            if self.substitute is None:
                raise ProtocolError("hit response needs a substitute address")
            return head + self.substitute.value.encode("ascii")
        return head

    @classmethod
    def decode(cls, data: bytes) -> "QueryResponse":
        if data[:4] != RESPONSE_MAGIC or len(data) < SHORT_RESPONSE_SIZE:
            raise ProtocolError("bad response magic")
        try:
            status = QueryStatus(data[4])
        except ValueError as e:
            raise ProtocolError(f"unknown response status {data[4]:#x}") from e
        if status is QueryStatus.HIT:
            if len(data) != HIT_RESPONSE_SIZE:
                raise ProtocolError(f"hit response must be {HIT_RESPONSE_SIZE} octets")
            return cls(status, _decode_address(data[5:]))
        if len(data) != SHORT_RESPONSE_SIZE:
            raise ProtocolError(f"miss/error response must be {SHORT_RESPONSE_SIZE} octets")
        return cls(status)


def encode_batch_header(count: int) -> bytes:
    return _BATCH_HEADER.pack(TRANSFER_MAGIC, count)


def decode_batch_header(data: bytes) -> int:
    if len(data) != BATCH_HEADER_SIZE:
        raise ProtocolError("truncated batch header")
    magic, count = _BATCH_HEADER.unpack(data)
    if magic != TRANSFER_MAGIC:
        raise ProtocolError("bad transfer magic")
    return count


def encode_batch(records: Iterable[bytes]) -> bytes:
    records = list(records)
    for record in records:
        if len(record) != RECORD_SIZE:
            raise ProtocolError(f"records must be {RECORD_SIZE} octets")
    return encode_batch_header(len(records)) + b"".join(records)


@dataclass(frozen=True)
class TransferAck:
    accepted: int
    ignored: int

    @property
    def total(self) -> int:
        return self.accepted + self.ignored

    def encode(self) -> bytes:
        return _ACK.pack(ACK_MAGIC, self.accepted, self.ignored)

    @classmethod
    def decode(cls, data: bytes) -> "TransferAck":
        if len(data) != ACK_SIZE:
            raise ProtocolError("truncated transfer ack")
        magic, accepted, ignored = _ACK.unpack(data)
        if magic != ACK_MAGIC:
            raise ProtocolError("bad ack magic")
        return cls(accepted, ignored)
