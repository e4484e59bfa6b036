"""
Cooperative transfer: shipping mined records to the shard that owns them
"""

import asyncio
from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple

from ..core.accounts import RECORD_SIZE
from ..core.config import Config
from ..core.errors import ConfigurationError, ProtocolError, TransferError
from ..storage.base import InsertResult, SlotStore
from ..storage.shard_store import record_slot
from ..utils.logging import LoggerMixin, format_kv
from .config import ShardSpec
from .protocol import (
    ACK_SIZE,
    BATCH_HEADER_SIZE,
    TransferAck,
    decode_batch_header,
    encode_batch,
)

RECEIVE_CHUNK_RECORDS = 1024


def check_batch_owner(records: Sequence[bytes], spec: ShardSpec, n_match: int) -> None:
    """Sender-side check that every record belongs to the receiving shard"""
    for record in records:
        try:
            slot = record_slot(record, n_match)
        except ValueError as e:
            raise TransferError(f"refusing to send malformed record: {e}") from e
        if not spec.owns(slot):
            raise TransferError(f"record for slot {slot:#x} does not belong to shard {spec.shard_id}")


async def transfer_send(records: Sequence[bytes], host: str, port: int, timeout: float = 10.0) -> TransferAck:
    """Send one batch over a fresh connection and wait for its ack"""
    reader, writer = await asyncio.wait_for(asyncio.open_connection(host, port), timeout)
    try:
        writer.write(encode_batch(records))
        await asyncio.wait_for(writer.drain(), timeout)
        data = await asyncio.wait_for(reader.readexactly(ACK_SIZE), timeout)
    except asyncio.IncompleteReadError as e:
        raise ProtocolError("connection closed before ack") from e
    finally:
        writer.close()
        try:
            await writer.wait_closed()
        except (ConnectionError, OSError):
            pass
    ack = TransferAck.decode(data)
    if ack.total != len(records):
        raise ProtocolError(f"ack counts {ack.accepted}+{ack.ignored} do not match {len(records)} sent")
    return ack


class PeerTransport(ABC):
    """Delivers a batch of records to a peer shard, blocking until acknowledged"""

    @abstractmethod
    def deliver(self, spec: ShardSpec, records: List[bytes]) -> TransferAck:
        """Deliver records; raise TransferError when delivery is abandoned"""

    def close(self) -> None:
        pass


class LocalTransport(PeerTransport):
    """Peers living in the same process: insert straight into their stores"""

    def __init__(self, stores: Dict[int, SlotStore]):
        self.stores = stores

    def deliver(self, spec: ShardSpec, records: List[bytes]) -> TransferAck:
        store = self.stores.get(spec.shard_id)
        if store is None:
            raise TransferError(f"no local store for shard {spec.shard_id}")
        return _insert_records(store, records)


class NetworkTransport(PeerTransport, LoggerMixin):
    """Stream transport with exponential backoff between failed attempts"""

    def __init__(self, n_match: int, config: Optional[Config] = None, max_attempts: Optional[int] = None):
        self.n_match = n_match
        self.config = config or Config()
        self.max_attempts = max_attempts
        self._closing = False

    def backoff(self, attempt: int) -> float:
        """Delay after the given failed attempt (1-based): base * 2^(attempt-1), capped"""
        return min(self.config.transfer_backoff_cap, self.config.transfer_backoff_base * 2 ** (attempt - 1))

    async def deliver_async(self, spec: ShardSpec, records: List[bytes]) -> TransferAck:
        check_batch_owner(records, spec, self.n_match)
        attempt = 0
        while True:
            attempt += 1
            try:
                ack = await transfer_send(records, spec.host, spec.transfer_port, self.config.transfer_timeout)
                self.logger.debug(
                    format_kv({"event": "transfer_ack", "shard": spec.shard_id, "sent": len(records), "accepted": ack.accepted, "ignored": ack.ignored})
                )
                return ack
            except (OSError, asyncio.TimeoutError, ProtocolError) as e:
                if self._closing or (self.max_attempts is not None and attempt >= self.max_attempts):
                    raise TransferError(f"transfer to shard {spec.shard_id} failed after {attempt} attempts: {e}") from e
                delay = self.backoff(attempt)
                self.logger.warning(format_kv({"event": "transfer_retry", "shard": spec.shard_id, "attempt": attempt, "delay": delay, "error": e}))
                await asyncio.sleep(delay)

    def deliver(self, spec: ShardSpec, records: List[bytes]) -> TransferAck:
        return asyncio.run(self.deliver_async(spec, records))

    def close(self) -> None:
        self._closing = True


def _insert_records(store: SlotStore, records: Sequence[bytes]) -> TransferAck:
    accepted = ignored = 0
    for record in records:
        try:
            result = store.insert_record(record)
        except ValueError:
            ignored += 1
            continue
        if result is InsertResult.INSERTED:
            accepted += 1
        else:
            ignored += 1
    return TransferAck(accepted, ignored)


class TransferServer(LoggerMixin):
    """Receives batches and inserts complete records with insert-ignore semantics"""

    def __init__(self, store: SlotStore, spec: ShardSpec):
        self.store = store
        self.spec = spec
        self.batches = 0
        self.accepted = 0
        self.ignored = 0
        self.address: Optional[Tuple[str, int]] = None
        self._server: Optional[asyncio.AbstractServer] = None

    async def start(self, host: Optional[str] = None, port: Optional[int] = None) -> Tuple[str, int]:
        self._server = await asyncio.start_server(
            self._handle, host or self.spec.host, self.spec.transfer_port if port is None else port
        )
        bound = self._server.sockets[0].getsockname()[:2]
        self.address = bound
        self.logger.info(format_kv({"event": "transfer_service_up", "shard": self.spec.shard_id, "host": bound[0], "port": bound[1]}))
        return bound

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None
            self.logger.info(
                format_kv({"event": "transfer_service_down", "shard": self.spec.shard_id, "batches": self.batches, "accepted": self.accepted, "ignored": self.ignored})
            )

    async def _insert(self, records: List[bytes]) -> TransferAck:
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(None, _insert_records, self.store, records)

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        try:
            while True:
                try:
                    header = await reader.readexactly(BATCH_HEADER_SIZE)
                except asyncio.IncompleteReadError as e:
                    if e.partial:
                        self.logger.warning(f"truncated batch header from {peer}")
                    return
                count = decode_batch_header(header)
                accepted = ignored = 0
                remaining = count
                while remaining:
                    chunk = min(remaining, RECEIVE_CHUNK_RECORDS)
                    try:
                        data = await reader.readexactly(chunk * RECORD_SIZE)
                    except asyncio.IncompleteReadError as e:
                        whole = len(e.partial) // RECORD_SIZE
                        if whole:
                            ack = await self._insert(_split(e.partial[: whole * RECORD_SIZE]))
                            self.accepted += ack.accepted
                            self.ignored += ack.ignored
                        self.logger.warning(f"batch from {peer} cut short after {count - remaining + whole} of {count} records")
                        return
                    ack = await self._insert(_split(data))
                    accepted += ack.accepted
                    ignored += ack.ignored
                    remaining -= chunk
                self.batches += 1
                self.accepted += accepted
                self.ignored += ignored
                writer.write(TransferAck(accepted, ignored).encode())
                await writer.drain()
        except ProtocolError as e:
            self.logger.warning(f"dropping connection from {peer}: {e}")
        except (ConnectionError, OSError) as e:
            self.logger.warning(f"connection from {peer} failed: {e}")
        finally:
            writer.close()


def _split(data: bytes) -> List[bytes]:
    return [data[i:i + RECORD_SIZE] for i in range(0, len(data), RECORD_SIZE)]


async def transfer_receive(store: SlotStore, spec: ShardSpec, port: Optional[int] = None) -> TransferServer:
    """Start accepting cooperative-transfer batches for a shard"""
    if store.shard.a0 != spec.a0 or store.shard.a1 != spec.a1:
        raise ConfigurationError(f"store range does not match shard {spec.shard_id}")
    server = TransferServer(store, spec)
    await server.start(port=port)
    return server
