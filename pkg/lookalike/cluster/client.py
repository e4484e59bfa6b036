"""
Query client: route a target to its shard and ask for a substitute
"""

import asyncio
import time
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from ..core.accounts import Address, AddressLike, normalize_address
from ..core.config import Config
from ..core.errors import ProtocolError
from ..storage.slots import slot_key
from ..utils.logging import LoggerMixin
from .config import ClusterConfig
from .protocol import QueryRequest, QueryResponse, QueryStatus


class QueryOutcome(Enum):
    SUBSTITUTE = "substitute"
    MISS = "miss"
    TIMEOUT = "timeout"
    ERROR = "error"


@dataclass(frozen=True)
class QueryResult:
    target: Address
    outcome: QueryOutcome
    substitute: Optional[Address] = None
    latency: Optional[float] = None
    attempts: int = 1
    shard_id: Optional[int] = None


class _ResponseProtocol(asyncio.DatagramProtocol):
    def __init__(self):
        self.responses: "asyncio.Queue[bytes]" = asyncio.Queue()

    def datagram_received(self, data: bytes, addr):
        self.responses.put_nowait(data)

    def error_received(self, exc):
        # ICMP unreachable on a connected socket; keep waiting for the timeout.
        pass


class QueryClient(LoggerMixin):
    """Sends one datagram per attempt and waits up to ``timeout`` seconds each"""

    def __init__(self, cluster: ClusterConfig, timeout: float = 0.5, retries: int = 1):
        self.cluster = cluster
        self.timeout = timeout
        self.retries = retries

    @classmethod
    def from_config(cls, cluster: ClusterConfig, config: Config) -> "QueryClient":
        return cls(cluster, timeout=config.query_timeout, retries=config.query_retries)

    async def query(self, target: AddressLike) -> QueryResult:
        address = normalize_address(target)
        spec = self.cluster.route(slot_key(address, self.cluster.n_match, max_match=40))
        payload = QueryRequest(self.cluster.n_match, address).encode()

        loop = asyncio.get_running_loop()
        transport, protocol = await loop.create_datagram_endpoint(_ResponseProtocol, remote_addr=(spec.host, spec.query_port))
        try:
            for attempt in range(1, self.retries + 2):
                started = time.perf_counter()
                transport.sendto(payload)
                deadline = started + self.timeout
                while True:
                    remaining = deadline - time.perf_counter()
                    if remaining <= 0:
                        break
                    try:
                        data = await asyncio.wait_for(protocol.responses.get(), remaining)
                    except asyncio.TimeoutError:
                        break
                    try:
                        response = QueryResponse.decode(data)
                    except ProtocolError:
                        self.logger.debug("discarding malformed response")
                        continue
                    latency = time.perf_counter() - started
                    return self._result(address, response, latency, attempt, spec.shard_id)
            return QueryResult(address, QueryOutcome.TIMEOUT, attempts=self.retries + 1, shard_id=spec.shard_id)
        finally:
            transport.close()

    @staticmethod
    def _result(target: Address, response: QueryResponse, latency: float, attempt: int, shard_id: int) -> QueryResult:
        if response.status is QueryStatus.HIT:
            outcome = QueryOutcome.SUBSTITUTE
        elif response.status is QueryStatus.MISS:
            outcome = QueryOutcome.MISS
        else:
            outcome = QueryOutcome.ERROR
        return QueryResult(target, outcome, response.substitute, latency, attempt, shard_id)


async def query_client(target: AddressLike, cluster: ClusterConfig, config: Optional[Config] = None) -> QueryResult:
    """One-shot query with the configured timeout and retry count"""
    return await QueryClient.from_config(cluster, config or Config()).query(target)
