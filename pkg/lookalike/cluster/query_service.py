"""
Datagram service answering similar-address queries from one shard
"""

import asyncio
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

from ..core.accounts import Address
from ..core.errors import ProtocolError, StoreError
from ..storage.base import SlotStore
from ..storage.slots import slot_key
from ..utils.helpers import rfc3339_now
from ..utils.logging import LoggerMixin, format_kv
from .config import ClusterConfig, ShardSpec
from .protocol import QueryRequest, QueryResponse


class HitLog:
    """Append-only hit log: timestamp, target and substitute per line"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._file = open(self.path, "a", encoding="ascii")

    def append(self, target: Address, substitute: Address) -> None:
        with self._lock:
            self._file.write(f"{rfc3339_now()} {target} {substitute}\n")
            self._file.flush()

    def close(self) -> None:
        with self._lock:
            if not self._file.closed:
                self._file.close()


@dataclass
class QueryStats:
    requests: int = 0
    hits: int = 0
    misses: int = 0
    misrouted: int = 0
    errors: int = 0


class QueryService(LoggerMixin):
    """Answers queries for the slots one shard owns.

    Hits return only the substitute address; the private key never leaves the
    store. Queries for slots owned elsewhere are answered as misses.
    """

    def __init__(self, store: SlotStore, spec: ShardSpec, hit_log: Optional[HitLog] = None):
        self.store = store
        self.spec = spec
        self.hit_log = hit_log
        self.stats = QueryStats()
        self.address: Optional[Tuple[str, int]] = None
        self._transport: Optional[asyncio.DatagramTransport] = None

    def handle(self, data: bytes) -> bytes:
        """Turn one request datagram into one response datagram"""
        self.stats.requests += 1
        try:
            request = QueryRequest.decode(data)
        except ProtocolError as e:
            self.stats.errors += 1
            self.logger.debug(f"malformed query: {e}")
            return QueryResponse.error().encode()

        if request.n_match != self.store.n_match:
            self.stats.errors += 1
            return QueryResponse.error().encode()

        slot = slot_key(request.target, request.n_match, max_match=40)
        if not self.spec.owns(slot.value):
            self.stats.misrouted += 1
            self.stats.misses += 1
            return QueryResponse.miss().encode()

        try:
            account = self.store.lookup(slot)
        except StoreError as e:
            self.stats.errors += 1
            self.logger.error(f"lookup failed: {e}")
            return QueryResponse.error().encode()

        if account is None:
            self.stats.misses += 1
            return QueryResponse.miss().encode()

        # every counted hit has its log line
        if self.hit_log is not None:
            try:
                self.hit_log.append(request.target, account.address)
            except (OSError, ValueError) as e:
                self.stats.errors += 1
                self.logger.error(f"hit log append failed: {e}")
                return QueryResponse.error().encode()
        self.stats.hits += 1
        return QueryResponse.hit(account.address).encode()

    async def start(self, host: Optional[str] = None, port: Optional[int] = None) -> Tuple[str, int]:
        """Bind the datagram endpoint; returns the bound (host, port)"""
        loop = asyncio.get_running_loop()
        bind = (host or self.spec.host, self.spec.query_port if port is None else port)
        transport, _ = await loop.create_datagram_endpoint(lambda: _QueryProtocol(self), local_addr=bind)
        self._transport = transport
        bound = transport.get_extra_info("sockname")[:2]
        self.address = bound
        self.logger.info(format_kv({"event": "query_service_up", "shard": self.spec.shard_id, "host": bound[0], "port": bound[1]}))
        return bound

    async def stop(self) -> None:
        if self._transport is not None:
            self._transport.close()
            self._transport = None
            self.logger.info(format_kv({"event": "query_service_down", "shard": self.spec.shard_id, **vars(self.stats)}))


class _QueryProtocol(asyncio.DatagramProtocol):
    def __init__(self, service: QueryService):
        self.service = service
        self.transport: Optional[asyncio.DatagramTransport] = None

    def connection_made(self, transport):
        self.transport = transport

    def datagram_received(self, data: bytes, addr):
        try:
            response = self.service.handle(data)
        except Exception:
            self.service.logger.exception("query handler failed")
            response = QueryResponse.error().encode()
        if self.transport is not None:
            self.transport.sendto(response, addr)

    def error_received(self, exc):
        self.service.logger.debug(f"datagram error: {exc}")


async def serve_queries(
    cluster: ClusterConfig,
    shard_id: int,
    store: SlotStore,
    hit_log: Optional[HitLog] = None,
    port: Optional[int] = None,
) -> QueryService:
    """Start the query service for one shard of a cluster"""
    service = QueryService(store, cluster.shard(shard_id), hit_log=hit_log)
    await service.start(port=port)
    return service
