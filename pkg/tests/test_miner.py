"""
Tests for the multi-worker miner and the throughput benchmark
"""

import math
import threading
import time

import pytest

from lookalike.cluster.protocol import TransferAck
from lookalike.cluster.transfer import LocalTransport, PeerTransport
from lookalike.core.config import Config
from lookalike.core.errors import ConfigurationError, MiningAborted, TransferError
from lookalike.mining.bench import bench
from lookalike.mining.miner import Miner, MiningStats, StopCondition, TransferBuffer, mine
from lookalike.storage.base import ShardFile
from lookalike.storage.shard_store import open_shard
from lookalike.storage.slots import slot_key
from lookalike.utils.helpers import load_json


class RecordingTransport(PeerTransport):
    """Delivers into local stores and remembers every batch size"""

    def __init__(self, stores, delay=0.0):
        self.inner = LocalTransport(stores)
        self.delay = delay
        self.batches = []

    def deliver(self, spec, records):
        if self.delay:
            time.sleep(self.delay)
        self.batches.append(len(records))
        return self.inner.deliver(spec, records)


class FailingTransport(PeerTransport):
    def deliver(self, spec, records):
        raise TransferError("peer unreachable")


class ShortAckTransport(PeerTransport):
    def deliver(self, spec, records):
        return TransferAck(0, len(records) - 1)


class FlakyTransport(RecordingTransport):
    """Fails every delivery while ``broken`` is set"""

    def __init__(self, stores):
        super().__init__(stores)
        self.broken = True

    def deliver(self, spec, records):
        if self.broken:
            raise TransferError("peer restarting")
        return super().deliver(spec, records)


def volatile_free(stats):
    data = stats.to_dict()
    for key in ("elapsed", "rate"):
        data.pop(key)
    return data


@pytest.fixture
def cluster_stores(two_shard_cluster, config):
    stores = {spec.shard_id: open_shard(spec.shard_file(2), config=config) for spec in two_shard_cluster.shards}
    yield stores
    for store in stores.values():
        store.close()


class TestStopCondition:
    """Test stop condition validation"""

    def test_needs_a_condition(self):
        """At least one stop condition is required"""
        with pytest.raises(ConfigurationError):
            StopCondition()

    def test_rejects_negative(self):
        """Targets cannot be negative"""
        with pytest.raises(ConfigurationError):
            StopCondition(target_generated=-1)

    def test_constructors(self):
        """Each named constructor sets its own field"""
        assert StopCondition.generated(5).target_generated == 5
        assert StopCondition.occupancy(7).target_occupancy == 7
        assert StopCondition.seconds(0.5).duration == 0.5


class TestMiningStats:
    """Test counters and summaries"""

    def test_merge_and_conservation(self):
        """Merged worker counters still balance"""
        a = MiningStats(generated=5, inserted=3, ignored_occupied=2)
        b = MiningStats(generated=4, buffered_for_transfer=1, discarded=3)
        a.merge(b)
        assert a.generated == 9 and a.conserved

    def test_rate(self):
        """Rate is accounts per second and zero for an instant run"""
        stats = MiningStats(generated=100)
        stats.finish(2.0)
        assert stats.rate == 50.0
        stats.finish(0.0)
        assert stats.rate == 0.0

    def test_summary_file(self, tmp_path):
        """The summary file is JSON with every counter"""
        stats = MiningStats(generated=3, inserted=3, workers=1)
        stats.write_summary(tmp_path / "summary.json")
        data = load_json(tmp_path / "summary.json")
        assert data["generated"] == 3 and data["workers"] == 1


class TestTransferBuffer:
    """Test the bounded per-peer buffer"""

    def test_threshold_must_fit_capacity(self, two_shard_cluster):
        """The flush threshold cannot exceed the buffer capacity"""
        with pytest.raises(ConfigurationError):
            TransferBuffer(two_shard_cluster.shard(1), capacity=4, threshold=8)

    def test_append_blocks_at_capacity(self, two_shard_cluster):
        """A full buffer blocks the producer until records are committed"""
        buffer = TransferBuffer(two_shard_cluster.shard(1), capacity=2, threshold=1)
        buffer.append(b"a")
        buffer.append(b"b")
        producer = threading.Thread(target=buffer.append, args=(b"c",))
        producer.start()
        producer.join(0.2)
        assert producer.is_alive()
        assert buffer.peek(10) == [b"a", b"b"]
        buffer.commit(1)
        producer.join(2.0)
        assert not producer.is_alive()
        assert buffer.peek(10) == [b"b", b"c"]

    def test_abort_wakes_blocked_producer(self, two_shard_cluster):
        """Aborting a full buffer raises in the blocked producer"""
        buffer = TransferBuffer(two_shard_cluster.shard(1), capacity=1, threshold=1)
        buffer.append(b"a")
        errors = []

        def produce():
            try:
                buffer.append(b"b")
            except MiningAborted as e:
                errors.append(e)

        producer = threading.Thread(target=produce)
        producer.start()
        buffer.abort()
        producer.join(2.0)
        assert len(errors) == 1


class TestMiner:
    """Test single-shard and cooperative mining"""

    def test_zero_target(self, make_store):
        """A zero target generates nothing"""
        store = make_store(n_match=2)
        stats = mine(store, 2, StopCondition.generated(0), seed=1)
        assert stats.generated == stats.inserted == 0
        assert store.occupancy() == 0

    def test_three_times_space_fills_about_95_percent(self, make_store, config):
        """768 accounts into 256 slots leave 230-253 slots occupied"""
        store = make_store(n_match=2)
        stats = mine(store, 4, StopCondition.generated(768), seed=2024, config=config)
        assert stats.generated == 768
        assert stats.conserved
        assert stats.inserted == store.occupancy(audit=True)
        assert 230 <= store.occupancy() <= 253

    def test_every_record_in_its_slot(self, make_store):
        """Each stored account sits in the slot its address names"""
        store = make_store(n_match=2)
        mine(store, 2, StopCondition.generated(200), seed=5)
        for slot, account in store.iter_records():
            assert slot_key(account.address, 2).value == slot

    def test_seeded_single_worker_is_reproducible(self, tmp_path, config):
        """One worker with a fixed seed writes byte-identical shard files"""
        contents = []
        for run in range(2):
            with open_shard(ShardFile(tmp_path / f"r{run}.dat", 0, 256, 2), config=config) as store:
                mine(store, 1, StopCondition.generated(300), seed=77, config=config)
            contents.append((tmp_path / f"r{run}.dat").read_bytes())
        assert contents[0] == contents[1]

    def test_occupancy_target(self, make_store):
        """An occupancy target stops at exactly that many records"""
        store = make_store(n_match=2)
        mine(store, 1, StopCondition.occupancy(100), seed=3)
        assert store.occupancy() == 100

    def test_unreachable_occupancy_rejected(self, make_store):
        """An occupancy target above the shard's slot count could never stop"""
        store = make_store(n_match=2)
        with pytest.raises(ConfigurationError, match="exceeds"):
            mine(store, 1, StopCondition.occupancy(300), seed=3)
        assert store.occupancy() == 0

    def test_full_occupancy_is_reachable(self, make_store):
        """Exactly 16^N is a valid target"""
        store = make_store(n_match=1)
        mine(store, 2, StopCondition.occupancy(16), seed=3)
        assert store.occupancy(audit=True) == 16

    def test_seeded_workers_reproduce_stats(self, tmp_path, config):
        """Several seeded workers draw the same accounts whatever the interleaving"""
        runs = []
        for run in range(2):
            with open_shard(ShardFile(tmp_path / f"w{run}.dat", 0, 256, 2), config=config) as store:
                stats = mine(store, 4, StopCondition.generated(503), seed=31, config=config)
                runs.append((volatile_free(stats), {slot for slot, _ in store.iter_records()}))
        assert runs[0] == runs[1]
        assert runs[0][0]["generated"] == 503

    def test_quotas_split_target(self):
        """Workers split the target as evenly as possible, first workers taking the remainder"""
        assert Miner.quotas(10, 4) == [3, 3, 2, 2]
        assert Miner.quotas(2, 4) == [1, 1, 0, 0]
        assert Miner.quotas(None, 2) == [None, None]

    def test_cancel_ends_unbounded_run(self, make_store):
        """Setting the cancel event stops a run that has no stop condition of its own"""
        store = make_store(n_match=3)
        miner = Miner(store)
        cancel = threading.Event()
        result = {}
        runner = threading.Thread(target=lambda: result.update(stats=miner.mine(2, StopCondition.seconds(math.inf), seed=8, cancel=cancel)))
        runner.start()
        time.sleep(0.2)
        cancel.set()
        runner.join(5.0)
        assert not runner.is_alive()
        assert result["stats"].generated > 0 and result["stats"].conserved

    def test_occupancy_already_reached(self, make_store):
        """A store already past the target generates nothing"""
        store = make_store(n_match=2)
        store.fill_synthetic(10, seed=1)
        stats = mine(store, 2, StopCondition.occupancy(5), seed=3)
        assert stats.generated == 0

    def test_duration(self, make_store):
        """A time limit ends the run promptly"""
        store = make_store(n_match=3)
        started = time.perf_counter()
        stats = mine(store, 2, StopCondition.seconds(0.3), seed=4)
        assert stats.generated > 0 and stats.conserved
        assert time.perf_counter() - started < 5.0

    def test_rejects_zero_workers(self, make_store):
        """At least one worker is required"""
        with pytest.raises(ConfigurationError):
            mine(make_store(n_match=2), 0, StopCondition.generated(1))

    def test_partial_store_needs_cluster(self, make_store):
        """A store covering part of the space needs the cluster layout"""
        with pytest.raises(ConfigurationError):
            Miner(make_store(n_match=2, a0=0, a1=0x80))

    def test_store_must_match_shard(self, make_store, two_shard_cluster):
        """The store range must equal the shard's range"""
        with pytest.raises(ConfigurationError):
            Miner(make_store(n_match=2, a0=0, a1=0x40), two_shard_cluster, 0, transport=LocalTransport({}))

    def test_peers_need_transport(self, cluster_stores, two_shard_cluster):
        """Foreign slots need a transport unless discarded"""
        with pytest.raises(ConfigurationError):
            Miner(cluster_stores[0], two_shard_cluster, 0)


class TestCooperativeMining:
    """Test routing foreign slots to their owners"""

    def test_two_shards_route_and_conserve(self, cluster_stores, two_shard_cluster, config):
        """Every generated account ends in exactly one place and each shard only holds its own range"""
        transport = RecordingTransport({1: cluster_stores[1]})
        stats = mine(
            cluster_stores[0], 3, StopCondition.generated(600), cluster=two_shard_cluster, shard_id=0,
            transport=transport, seed=9, config=config,
        )
        assert stats.conserved
        assert stats.buffered_for_transfer > 0
        assert stats.transfer_accepted + stats.transfer_ignored == stats.buffered_for_transfer
        assert stats.transfer_batches == len(transport.batches)
        assert cluster_stores[1].occupancy(audit=True) == stats.transfer_accepted
        assert cluster_stores[0].occupancy(audit=True) == stats.inserted
        for shard_id, store in cluster_stores.items():
            spec = two_shard_cluster.shard(shard_id)
            assert all(spec.owns(slot) for slot, _ in store.iter_records())

    def test_batches_respect_threshold(self, cluster_stores, two_shard_cluster):
        """A slow peer applies backpressure without losing records"""
        config = Config(transfer_flush_threshold=4, transfer_buffer_capacity=8)
        transport = RecordingTransport({1: cluster_stores[1]}, delay=0.005)
        miner = Miner(cluster_stores[0], two_shard_cluster, 0, transport=transport, config=config)
        stats = miner.mine(4, StopCondition.generated(400), seed=11)
        assert stats.conserved
        assert max(transport.batches) <= 4
        assert sum(transport.batches) == stats.buffered_for_transfer
        assert all(len(buffer) == 0 for buffer in miner.buffers.values())

    def test_discard_foreign(self, cluster_stores, two_shard_cluster):
        """Discarding foreign accounts sends nothing to peers"""
        stats = mine(
            cluster_stores[0], 2, StopCondition.generated(300), cluster=two_shard_cluster, shard_id=0,
            seed=12, discard_foreign=True,
        )
        assert stats.discarded > 0
        assert stats.buffered_for_transfer == 0
        assert stats.conserved
        assert cluster_stores[1].occupancy() == 0

    def test_failed_transfer_aborts_with_stats(self, cluster_stores, two_shard_cluster, config):
        """A dead peer aborts mining and the partial stats still balance"""
        with pytest.raises(MiningAborted) as raised:
            mine(
                cluster_stores[0], 2, StopCondition.generated(2000), cluster=two_shard_cluster, shard_id=0,
                transport=FailingTransport(), seed=13, config=config,
            )
        stats = raised.value.stats
        assert stats is not None and stats.conserved
        assert stats.transfer_accepted == 0

    def test_reuse_after_abort(self, cluster_stores, two_shard_cluster, config):
        """A miner that aborted runs again from clean counters once the peer is back"""
        transport = FlakyTransport({1: cluster_stores[1]})
        miner = Miner(cluster_stores[0], two_shard_cluster, 0, transport=transport, config=config)
        with pytest.raises(MiningAborted):
            miner.mine(2, StopCondition.generated(500), seed=15)
        transport.broken = False
        stats = miner.mine(2, StopCondition.generated(500), seed=16)
        assert stats.generated == 500 and stats.conserved
        assert stats.transfer_batches == len(transport.batches)
        assert stats.transfer_accepted + stats.transfer_ignored == stats.buffered_for_transfer
        assert all(len(buffer) == 0 for buffer in miner.buffers.values())

    def test_short_ack_aborts(self, cluster_stores, two_shard_cluster, config):
        """An ack for fewer records than sent aborts mining"""
        with pytest.raises(MiningAborted):
            mine(
                cluster_stores[0], 1, StopCondition.generated(200), cluster=two_shard_cluster, shard_id=0,
                transport=ShortAckTransport(), seed=14, config=config,
            )


class TestBench:
    """Test the worker-count benchmark"""

    def test_rows(self, tmp_path, config):
        """One row per worker count from 1 to 16, each conserving its stats"""
        rows = bench([1, 2, 4, 8, 16], 50, n_match=2, seed=1, work_dir=tmp_path, config=config)
        assert [row.workers for row in rows] == [1, 2, 4, 8, 16]
        assert [row.accounts for row in rows] == [50, 100, 200, 400, 800]
        assert all(row.stats.conserved and row.rate >= 0 for row in rows)
        assert set(rows[0].to_dict()) == {"workers", "accounts", "elapsed", "rate"}

    def test_seeded_runs_reproduce_stats(self, tmp_path, config):
        """Two seeded benchmarks agree on every counter except timing"""
        runs = [
            [volatile_free(row.stats) for row in bench([1, 2, 4, 8, 16], 30, n_match=2, seed=5, work_dir=tmp_path, config=config)]
            for _ in range(2)
        ]
        assert runs[0] == runs[1]

    def test_thousand_per_worker(self, tmp_path, config):
        """Three worker counts with a thousand accounts each give three rows"""
        rows = bench([1, 2, 4], 1000, n_match=4, seed=2, work_dir=tmp_path, config=config)
        assert len(rows) == 3
        assert all(row.rate > 0 and row.stats.conserved for row in rows)

    def test_rejects_bad_counts(self):
        """Empty or zero worker counts are refused"""
        with pytest.raises(ConfigurationError):
            bench([], 10)
        with pytest.raises(ConfigurationError):
            bench([0], 10)
