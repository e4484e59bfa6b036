"""
Ethereum-style accounts: private keys, address derivation and EIP-55 checksums
"""

import re
import secrets
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Union

import numpy as np
from coincurve import PrivateKey as _CurveKey
from Crypto.Hash import keccak

from ..utils.helpers import strip_hex_prefix

SECP256K1_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141

ADDRESS_HEX_LENGTH = 40
KEY_HEX_LENGTH = 64
RECORD_SIZE = ADDRESS_HEX_LENGTH + KEY_HEX_LENGTH

_HEX_DIGITS = frozenset("0123456789abcdef")
_CHECKSUM_SYNTAX = re.compile(r"^0x[0-9a-fA-F]{40}$")


def keccak256(data: bytes) -> bytes:
    """Keccak-256 digest (the pre-standard SHA-3 padding Ethereum uses)"""
    return keccak.new(digest_bits=256, data=data).digest()


def _is_lower_hex(text: str, length: int) -> bool:
    return len(text) == length and all(c in _HEX_DIGITS for c in text)


@dataclass(frozen=True)
class PrivateKey:
    """A secp256k1 signing scalar"""

    scalar: int

    def __post_init__(self):
        if not 1 <= self.scalar < SECP256K1_ORDER:
            raise ValueError("private key scalar must be in [1, group order)")

    @classmethod
    def from_hex(cls, text: str) -> "PrivateKey":
        """Parse a 64-digit hex private key (0x prefix optional)"""
        text = strip_hex_prefix(text)
        if len(text) != KEY_HEX_LENGTH:
            raise ValueError(f"private key must be {KEY_HEX_LENGTH} hex digits")
        return cls(int(text, 16))

    def to_bytes(self) -> bytes:
        return self.scalar.to_bytes(32, "big")

    def hex(self) -> str:
        return f"{self.scalar:064x}"


@dataclass(frozen=True)
class Address:
    """A 160-bit account address held in canonical lowercase hex without 0x"""

    value: str

    def __post_init__(self):
        if not _is_lower_hex(self.value, ADDRESS_HEX_LENGTH):
            raise ValueError(f"not a canonical address: {self.value!r}")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Address":
        if len(raw) != 20:
            raise ValueError("address must be 20 octets")
        return cls(raw.hex())

    def to_bytes(self) -> bytes:
        return bytes.fromhex(self.value)

    def checksummed(self) -> str:
        return eip55_encode(self)

    def __str__(self) -> str:
        return self.value


AddressLike = Union[Address, str]


def normalize_address(address: AddressLike) -> Address:
    """Accept an Address or hex text in any case, with or without 0x"""
    if isinstance(address, Address):
        return address
    return Address(strip_hex_prefix(address.strip()).lower())


@dataclass(frozen=True)
class Account:
    """A private key and the address derived from it.

    Build accounts with ``from_key`` or ``generate_account``; ``from_record``
    trusts the stored pair unless ``verify`` is set.
    """

    key: PrivateKey
    address: Address

    @classmethod
    def from_key(cls, key: PrivateKey) -> "Account":
        return cls(key=key, address=derive_address(key))

    @classmethod
    def from_record(cls, record: bytes, verify: bool = False) -> "Account":
        """Parse a 104-octet stored record (address hex then key hex)"""
        if len(record) != RECORD_SIZE:
            raise ValueError(f"record must be {RECORD_SIZE} octets, got {len(record)}")
        try:
            text = record.decode("ascii")
        except UnicodeDecodeError as e:
            raise ValueError("record is not ASCII") from e
        address_hex, key_hex = text[:ADDRESS_HEX_LENGTH], text[ADDRESS_HEX_LENGTH:]
        if not _is_lower_hex(address_hex, ADDRESS_HEX_LENGTH) or not _is_lower_hex(key_hex, KEY_HEX_LENGTH):
            raise ValueError("record holds non-hex octets")
        account = cls(key=PrivateKey(int(key_hex, 16)), address=Address(address_hex))
        if verify and derive_address(account.key) != account.address:
            raise ValueError("record address does not derive from its key")
        return account

    def to_record(self) -> bytes:
        return (self.address.value + self.key.hex()).encode("ascii")


def derive_address(key: PrivateKey) -> Address:
    """Rightmost 160 bits of Keccak-256 over the 64-octet uncompressed public key"""
    public = _CurveKey(key.to_bytes()).public_key.format(compressed=False)[1:]
    return Address.from_bytes(keccak256(public)[-20:])


class EntropySource(ABC):
    """Supplier of 32-octet random strings for key generation"""

    @abstractmethod
    def read32(self) -> bytes:
        """Return 32 uniformly random octets"""


class SystemEntropy(EntropySource):
    """Operating-system CSPRNG"""

    def read32(self) -> bytes:
        return secrets.token_bytes(32)


class SeededEntropy(EntropySource):
    """Reproducible stream for tests and experiments; not for real keys"""

    def __init__(self, seed: Union[int, np.random.SeedSequence]):
        self._rng = np.random.default_rng(seed)

    def read32(self) -> bytes:
        return self._rng.bytes(32)


def spawn_entropy(seed: Optional[int], count: int) -> List[EntropySource]:
    """Independent per-worker entropy streams derived from one master seed"""
    if seed is None:
        return [SystemEntropy() for _ in range(count)]
    return [SeededEntropy(child) for child in np.random.SeedSequence(seed).spawn(count)]


def generate_account(entropy: Optional[EntropySource] = None) -> Account:
    """Draw a fresh account, re-drawing scalars outside [1, order)"""
    source = entropy or SystemEntropy()
    while True:
        scalar = int.from_bytes(source.read32(), "big")
        if 1 <= scalar < SECP256K1_ORDER:
            return Account.from_key(PrivateKey(scalar))


class ChecksumStatus(Enum):
    """Outcome of EIP-55 verification; only VALID is truthy"""

    VALID = "valid"
    INVALID = "invalid"
    NEUTRAL = "neutral"

    def __bool__(self) -> bool:
        return self is ChecksumStatus.VALID


def eip55_encode(address: AddressLike) -> str:
    """Mixed-case checksum form, 0x-prefixed"""
    lower = normalize_address(address).value
    digest = keccak256(lower.encode("ascii")).hex()
    return "0x" + "".join(
        char.upper() if char in "abcdef" and int(digest[i], 16) >= 8 else char
        for i, char in enumerate(lower)
    )


def eip55_verify(text: object) -> ChecksumStatus:
    """Check an 0x-prefixed address against its EIP-55 capitalization.

    Single-case text that is not itself the checksum form is NEUTRAL;
    malformed input is INVALID and never raises.
    """
    if not isinstance(text, str) or not _CHECKSUM_SYNTAX.match(text):
        return ChecksumStatus.INVALID
    body = text[2:]
    if text == eip55_encode(body):
        return ChecksumStatus.VALID
    if body == body.lower() or body == body.upper():
        return ChecksumStatus.NEUTRAL
    return ChecksumStatus.INVALID
