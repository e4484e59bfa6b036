"""
Desk-scale end-to-end simulation: synthetic targets, query traffic and latency measurements
"""

import asyncio
import tempfile
import time
from contextlib import asynccontextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, AsyncIterator, Dict, List, Optional, Sequence, Union

import numpy as np

from .cluster.client import QueryClient, QueryOutcome, QueryResult
from .cluster.config import ClusterConfig
from .cluster.node import ShardNode
from .cluster.transfer import TransferServer, transfer_send
from .core.accounts import Address
from .core.config import Config
from .core.coverage import expected_coverage
from .storage.base import ShardFile
from .storage.shard_store import open_shard, synthetic_record
from .storage.slots import matches
from .utils.logging import format_kv, get_logger

logger = get_logger("simulation")

DEFAULT_CONCURRENCY = 32


@dataclass(frozen=True)
class LatencySummary:
    count: int = 0
    min: Optional[float] = None
    mean: Optional[float] = None
    p95: Optional[float] = None
    max: Optional[float] = None

    @classmethod
    def of(cls, samples: Sequence[float]) -> "LatencySummary":
        if not samples:
            return cls()
        values = np.asarray(samples, dtype=float)
        return cls(
            count=len(values),
            min=float(values.min()),
            mean=float(values.mean()),
            p95=float(np.percentile(values, 95)),
            max=float(values.max()),
        )


@dataclass
class SimulationReport:
    """Outcome of a batch of simulated substitution queries.

    ``hits + misses + timeouts == queries``; error responses count as misses
    and are also tallied in ``errors``.
    """

    queries: int = 0
    hits: int = 0
    misses: int = 0
    timeouts: int = 0
    errors: int = 0
    verified_hits: int = 0
    hit_rate: float = 0.0
    predicted_coverage: Optional[float] = None
    latency: LatencySummary = field(default_factory=LatencySummary)

    @property
    def consistent(self) -> bool:
        return self.hits + self.misses + self.timeouts == self.queries and self.verified_hits == self.hits

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def random_targets(count: int, seed: Optional[int] = None) -> List[Address]:
    """Fresh uniformly random target addresses"""
    rng = np.random.default_rng(seed)
    return [Address(rng.bytes(20).hex()) for _ in range(count)]


def summarize(results: Sequence[QueryResult], n_match: int, predicted: Optional[float] = None) -> SimulationReport:
    report = SimulationReport(queries=len(results), predicted_coverage=predicted)
    latencies = []
    for result in results:
        if result.latency is not None:
            latencies.append(result.latency)
        if result.outcome is QueryOutcome.SUBSTITUTE:
            report.hits += 1
            if result.substitute is not None and matches(result.target, result.substitute, n_match):
                report.verified_hits += 1
            else:
                logger.error(f"hit for {result.target} returned non-matching {result.substitute}")
        elif result.outcome is QueryOutcome.TIMEOUT:
            report.timeouts += 1
        else:
            report.misses += 1
            if result.outcome is QueryOutcome.ERROR:
                report.errors += 1
    report.hit_rate = report.hits / report.queries if report.queries else 0.0
    report.latency = LatencySummary.of(latencies)
    return report


async def run_simulation(
    cluster: ClusterConfig,
    queries: int,
    seed: Optional[int] = None,
    config: Optional[Config] = None,
    predicted_coverage: Optional[float] = None,
    concurrency: int = DEFAULT_CONCURRENCY,
) -> SimulationReport:
    """Query ``queries`` random targets against the cluster and verify every hit"""
    client = QueryClient.from_config(cluster, config or Config())
    targets = random_targets(queries, seed)
    gate = asyncio.Semaphore(max(1, concurrency))

    async def one(target: Address) -> QueryResult:
        async with gate:
            return await client.query(target)

    started = time.perf_counter()
    results = await asyncio.gather(*(one(t) for t in targets))
    report = summarize(results, cluster.n_match, predicted_coverage)
    logger.info(
        format_kv({"event": "simulation_done", "queries": report.queries, "hits": report.hits, "misses": report.misses, "timeouts": report.timeouts, "hit_rate": report.hit_rate, "seconds": time.perf_counter() - started})
    )
    return report


@asynccontextmanager
async def in_process_cluster(cluster: ClusterConfig, config: Optional[Config] = None, transfer: bool = False) -> AsyncIterator[ClusterConfig]:
    """Open every shard's store and serve it from this event loop.

    Yields the cluster with the ports actually bound.
    """
    nodes: List[ShardNode] = []
    try:
        for spec in cluster.shards:
            node = ShardNode(cluster, spec.shard_id, config=config, transfer=transfer)
            nodes.append(node)
            bound = (await node.start()).shard(spec.shard_id)
            cluster = cluster.with_ports(spec.shard_id, bound.query_port, bound.transfer_port)
        yield cluster
    finally:
        for node in nodes:
            await node.stop()


def cluster_coverage(cluster: ClusterConfig, config: Optional[Config] = None) -> float:
    """Fraction of the whole slot space currently occupied, read from each shard's store"""
    occupied = 0
    for spec in cluster.shards:
        with open_shard(spec.shard_file(cluster.n_match), config=config) as store:
            occupied += store.occupancy()
    return occupied / 16**cluster.n_match


def predicted_coverage(generated: int, n_match: int) -> float:
    return expected_coverage(generated, 16**n_match)


# ----------------------------------------------------------------------
# latency measurements


@dataclass(frozen=True)
class LatencyScaling:
    n_match: int
    small_records: int
    large_records: int
    small: LatencySummary
    large: LatencySummary
    reads_per_lookup: float

    @property
    def ratio(self) -> float:
        return self.large.mean / self.small.mean

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["ratio"] = self.ratio
        return data


async def _measure_store(path: Path, n_match: int, records: int, queries: int, seed: int, config: Config):
    cluster = ClusterConfig.single(n_match, path)
    with open_shard(cluster.shards[0].shard_file(n_match), config=config) as store:
        store.fill_synthetic(records, seed=seed)
        reads_before = store.read_count
        async with ShardNode(cluster, 0, config=config, store=store, transfer=False) as node:
            client = QueryClient.from_config(node.cluster, config)
            latencies = []
            for target in random_targets(queries, seed + 1):
                result = await client.query(target)
                if result.latency is not None:
                    latencies.append(result.latency)
        reads = store.read_count - reads_before
    return LatencySummary.of(latencies), reads / max(1, queries)


async def latency_scaling(
    small_records: int = 10_000,
    large_records: int = 100_000,
    n_match: int = 6,
    queries: int = 500,
    seed: int = 0,
    directory: Optional[Union[str, Path]] = None,
    config: Optional[Config] = None,
) -> LatencyScaling:
    """Mean loopback query latency against a small and a large synthetic store"""
    config = config or Config()
    with tempfile.TemporaryDirectory(prefix="lookalike-latency-", dir=directory) as tmp:
        small, small_reads = await _measure_store(Path(tmp) / "small" / "shard.dat", n_match, small_records, queries, seed, config)
        large, large_reads = await _measure_store(Path(tmp) / "large" / "shard.dat", n_match, large_records, queries, seed, config)
    return LatencyScaling(n_match, small_records, large_records, small, large, (small_reads + large_reads) / 2)


@dataclass(frozen=True)
class TransferTiming:
    batches: int
    batch_records: int
    latency: LatencySummary
    megabytes_per_second: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


async def measure_transfer_latency(
    batches: int = 20,
    batch_records: int = 4096,
    n_match: int = 6,
    seed: int = 0,
    directory: Optional[Union[str, Path]] = None,
    config: Optional[Config] = None,
) -> TransferTiming:
    """Round-trip time of cooperative-transfer batches over loopback"""
    config = config or Config()
    rng = np.random.default_rng(seed)
    with tempfile.TemporaryDirectory(prefix="lookalike-transfer-", dir=directory) as tmp:
        cluster = ClusterConfig.single(n_match, Path(tmp) / "shard.dat")
        spec = cluster.shards[0]
        with open_shard(spec.shard_file(n_match), config=config) as store:
            server = TransferServer(store, spec)
            host, port = await server.start()
            latencies = []
            sent = 0
            try:
                for _ in range(batches):
                    slots = rng.integers(0, 16**n_match, size=batch_records).tolist()
                    records = [synthetic_record(slot, n_match, rng) for slot in slots]
                    started = time.perf_counter()
                    await transfer_send(records, host, port, config.transfer_timeout)
                    latencies.append(time.perf_counter() - started)
                    sent += sum(len(r) for r in records)
            finally:
                await server.stop()
    total = sum(latencies)
    return TransferTiming(batches, batch_records, LatencySummary.of(latencies), sent / 1e6 / total if total else 0.0)
