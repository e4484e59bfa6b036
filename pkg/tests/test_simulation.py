"""
Tests for end-to-end simulation and latency measurements
"""

import math

import pytest

from lookalike.cluster.client import QueryOutcome, QueryResult
from lookalike.cluster.config import ClusterConfig
from lookalike.core.accounts import Address
from lookalike.mining.miner import StopCondition, mine
from lookalike.simulation import (
    LatencySummary,
    cluster_coverage,
    in_process_cluster,
    latency_scaling,
    predicted_coverage,
    measure_transfer_latency,
    random_targets,
    run_simulation,
    summarize,
)
from lookalike.storage.shard_store import open_shard


def mined_cluster(tmp_path, config, n_match, tau, seed):
    cluster = ClusterConfig.single(n_match, tmp_path / "mined" / "shard.dat")
    with open_shard(cluster.shards[0].shard_file(n_match), config=config) as store:
        mine(store, 4, StopCondition.generated(int(tau * 16**n_match)), seed=seed, config=config)
    return cluster


class TestSummaries:
    """Test report arithmetic"""

    def test_latency_summary(self):
        """Count, bounds and mean of a latency sample"""
        summary = LatencySummary.of([0.001, 0.002, 0.003, 0.004])
        assert summary.count == 4
        assert summary.min == 0.001 and summary.max == 0.004
        assert summary.mean == pytest.approx(0.0025)
        assert LatencySummary.of([]).count == 0

    def test_outcomes_partition_queries(self):
        """Every result lands in one bucket and bad substitutes fail verification"""
        target = Address("48b7" + "1" * 32 + "7696")
        good = Address("48b7" + "2" * 32 + "7696")
        bad = Address("0" * 40)
        results = [
            QueryResult(target, QueryOutcome.SUBSTITUTE, good, 0.001),
            QueryResult(target, QueryOutcome.SUBSTITUTE, bad, 0.001),
            QueryResult(target, QueryOutcome.MISS, latency=0.001),
            QueryResult(target, QueryOutcome.ERROR, latency=0.001),
            QueryResult(target, QueryOutcome.TIMEOUT, attempts=2),
        ]
        report = summarize(results, 8)
        assert (report.hits, report.misses, report.timeouts, report.errors) == (2, 2, 1, 1)
        assert report.verified_hits == 1
        assert not report.consistent
        assert report.latency.count == 4
        assert report.hit_rate == pytest.approx(0.4)

    def test_random_targets_seeded(self):
        """Seeded targets repeat and do not collide"""
        assert random_targets(5, seed=1) == random_targets(5, seed=1)
        assert len(set(random_targets(100, seed=2))) == 100

    def test_predicted_coverage(self):
        """Prediction uses the exponential coverage form"""
        assert predicted_coverage(768, 2) == pytest.approx(1 - math.exp(-3))


class TestHitRate:
    """Test measured hit rates against predicted coverage"""

    @pytest.mark.asyncio
    async def test_tau_three(self, tmp_path, config):
        """A store mined to tau=3 answers about 95% of random targets"""
        cluster = mined_cluster(tmp_path, config, 3, 3.0, seed=21)
        async with in_process_cluster(cluster, config) as live:
            report = await run_simulation(live, 10_000, seed=5, config=config, predicted_coverage=predicted_coverage(3 * 16**3, 3))
        assert report.consistent
        assert report.hit_rate == pytest.approx(0.95, abs=0.02)
        assert report.hit_rate == pytest.approx(cluster_coverage(cluster, config), abs=0.02)

    @pytest.mark.asyncio
    async def test_tau_point_seven(self, tmp_path, config):
        """A store mined to tau=0.7 answers about half of random targets"""
        cluster = mined_cluster(tmp_path, config, 3, 0.7, seed=22)
        async with in_process_cluster(cluster, config) as live:
            report = await run_simulation(live, 10_000, seed=6, config=config)
        assert report.consistent
        assert report.hit_rate == pytest.approx(1 - math.exp(-0.7), abs=0.02)

    @pytest.mark.slow
    @pytest.mark.asyncio
    async def test_tau_three_full_scale(self, tmp_path, config):
        """196,608 accounts mined at N=4 answer 0.95 +/- 0.02 of 10,000 targets, every hit verified"""
        cluster = mined_cluster(tmp_path, config, 4, 3.0, seed=23)
        async with in_process_cluster(cluster, config) as live:
            report = await run_simulation(live, 10_000, seed=7, config=config, predicted_coverage=predicted_coverage(196_608, 4))
        assert report.queries == 10_000
        assert report.consistent
        assert report.verified_hits == report.hits
        assert report.hit_rate == pytest.approx(0.95, abs=0.02)

    @pytest.mark.slow
    @pytest.mark.asyncio
    async def test_tau_point_seven_full_scale(self, tmp_path, config):
        """tau=0.7 at N=4 answers 0.50 +/- 0.02 of 10,000 targets"""
        cluster = mined_cluster(tmp_path, config, 4, 0.7, seed=24)
        async with in_process_cluster(cluster, config) as live:
            report = await run_simulation(live, 10_000, seed=8, config=config)
        assert report.consistent
        assert report.hit_rate == pytest.approx(0.50, abs=0.02)

    @pytest.mark.asyncio
    async def test_empty_store(self, tmp_path, config):
        """An empty store misses every query"""
        cluster = ClusterConfig.single(2, tmp_path / "empty.dat")
        async with in_process_cluster(cluster, config) as live:
            report = await run_simulation(live, 200, seed=1, config=config)
        assert report.hits == 0
        assert report.misses == 200
        assert report.hit_rate == 0.0

    @pytest.mark.asyncio
    async def test_two_shards(self, tmp_path, config):
        """Queries route to both shards and every hit is verified"""
        cluster = ClusterConfig.split_evenly(3, 2, tmp_path / "pair")
        for spec in cluster.shards:
            with open_shard(spec.shard_file(3), config=config) as store:
                store.fill_synthetic(spec.a1 - spec.a0, seed=spec.shard_id)
        async with in_process_cluster(cluster, config) as live:
            report = await run_simulation(live, 500, seed=2, config=config)
        assert report.hits == report.verified_hits == 500

    @pytest.mark.asyncio
    async def test_zero_queries(self, tmp_path, config):
        """No queries report a zero hit rate"""
        cluster = ClusterConfig.single(1, tmp_path / "tiny.dat")
        async with in_process_cluster(cluster, config) as live:
            report = await run_simulation(live, 0, config=config)
        assert report.queries == 0 and report.hit_rate == 0.0


class TestLatency:
    """Test loopback latency measurements"""

    @pytest.mark.asyncio
    async def test_lookup_cost_independent_of_size(self, tmp_path, config):
        """Ten times the records leaves mean latency within 1.5x and one read per lookup"""
        scaling = await latency_scaling(10_000, 100_000, n_match=6, queries=300, seed=3, directory=tmp_path, config=config)
        assert scaling.reads_per_lookup == 1.0
        assert scaling.small.count == scaling.large.count == 300
        assert scaling.ratio <= 1.5

    @pytest.mark.slow
    @pytest.mark.asyncio
    async def test_lookup_cost_at_ten_million(self, tmp_path, config):
        """10^4 and 10^7 records at N=6 stay within 1.5x mean latency with one read per lookup"""
        scaling = await latency_scaling(10_000, 10_000_000, n_match=6, queries=1000, seed=4, directory=tmp_path, config=config)
        assert scaling.reads_per_lookup == 1.0
        assert scaling.ratio <= 1.5

    @pytest.mark.asyncio
    async def test_transfer_round_trips(self, tmp_path, config):
        """Each transfer batch is timed and throughput is positive"""
        timing = await measure_transfer_latency(batches=5, batch_records=1000, n_match=4, seed=1, directory=tmp_path, config=config)
        assert timing.latency.count == 5
        assert timing.megabytes_per_second > 0
        assert timing.to_dict()["batch_records"] == 1000
