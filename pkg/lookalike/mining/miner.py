"""
Multi-worker account mining into a local shard, with cooperative transfer of foreign slots
"""

import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from ..cluster.config import ClusterConfig, ShardSpec
from ..cluster.transfer import PeerTransport
from ..core.accounts import EntropySource, generate_account, spawn_entropy
from ..core.config import Config
from ..core.errors import ConfigurationError, MiningAborted, StoreError, TransferError
from ..storage.base import InsertResult, SlotStore
from ..storage.slots import slot_key
from ..utils.helpers import save_json
from ..utils.logging import LoggerMixin, format_kv


@dataclass(frozen=True)
class StopCondition:
    """When to stop mining; the first condition reached wins"""

    target_generated: Optional[int] = None
    target_occupancy: Optional[int] = None
    duration: Optional[float] = None

    def __post_init__(self):
        if self.target_generated is None and self.target_occupancy is None and self.duration is None:
            raise ConfigurationError("a stop condition needs target_generated, target_occupancy or duration")
        for name in ("target_generated", "target_occupancy", "duration"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigurationError(f"{name} must be non-negative")

    @classmethod
    def generated(cls, count: int) -> "StopCondition":
        return cls(target_generated=count)

    @classmethod
    def occupancy(cls, count: int) -> "StopCondition":
        return cls(target_occupancy=count)

    @classmethod
    def seconds(cls, duration: float) -> "StopCondition":
        return cls(duration=duration)


@dataclass
class MiningStats:
    """Counters for one mining run.

    ``generated = inserted + ignored_occupied + buffered_for_transfer + discarded``
    holds after every run, including aborted ones.
    """

    generated: int = 0
    inserted: int = 0
    ignored_occupied: int = 0
    buffered_for_transfer: int = 0
    discarded: int = 0
    transfer_accepted: int = 0
    transfer_ignored: int = 0
    transfer_batches: int = 0
    workers: int = 0
    elapsed: float = 0.0
    rate: float = 0.0

    @property
    def conserved(self) -> bool:
        return self.generated == self.inserted + self.ignored_occupied + self.buffered_for_transfer + self.discarded

    def merge(self, other: "MiningStats") -> None:
        for name in ("generated", "inserted", "ignored_occupied", "buffered_for_transfer", "discarded"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def finish(self, elapsed: float) -> None:
        self.elapsed = elapsed
        self.rate = self.generated / elapsed if elapsed > 0 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_kv(self) -> str:
        return format_kv(self.to_dict())

    def write_summary(self, path: Union[str, Path]) -> None:
        save_json(self.to_dict(), path)


class TransferBuffer:
    """Records waiting to be shipped to one peer shard.

    Appends block while the buffer is at capacity; records leave only after
    the peer has acknowledged them (``commit``).
    """

    def __init__(self, spec: ShardSpec, capacity: int, threshold: int):
        if not 0 < threshold <= capacity:
            raise ConfigurationError("transfer buffer needs 0 < threshold <= capacity")
        self.spec = spec
        self.capacity = capacity
        self.threshold = threshold
        self._records: List[bytes] = []
        self._cond = threading.Condition()
        self._aborted = False

    def __len__(self) -> int:
        with self._cond:
            return len(self._records)

    @property
    def ready(self) -> bool:
        return len(self) >= self.threshold

    def append(self, record: bytes) -> None:
        with self._cond:
            while len(self._records) >= self.capacity and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise MiningAborted(f"transfer to shard {self.spec.shard_id} abandoned")
            self._records.append(record)
            if len(self._records) >= self.threshold:
                self._cond.notify_all()

    def peek(self, limit: int) -> List[bytes]:
        with self._cond:
            return list(self._records[:limit])

    def commit(self, count: int) -> None:
        with self._cond:
            del self._records[:count]
            self._cond.notify_all()

    def abort(self) -> None:
        with self._cond:
            self._aborted = True
            self._cond.notify_all()


class Miner(LoggerMixin):
    """Generates accounts on worker threads and routes each to its owner.

    Locally owned slots go straight into ``store`` (insert-ignore); foreign
    slots are buffered per peer and shipped by a flusher thread through
    ``transport``, or counted as discarded when ``discard_foreign`` is set.
    """

    def __init__(
        self,
        store: SlotStore,
        cluster: Optional[ClusterConfig] = None,
        shard_id: int = 0,
        transport: Optional[PeerTransport] = None,
        config: Optional[Config] = None,
        discard_foreign: bool = False,
    ):
        self.store = store
        self.config = config or Config()
        self.transport = transport
        self.discard_foreign = discard_foreign
        self.cluster = cluster
        self.shard_id = shard_id

        if cluster is not None:
            local = cluster.shard(shard_id)
            if (local.a0, local.a1) != (store.shard.a0, store.shard.a1) or cluster.n_match != store.n_match:
                raise ConfigurationError(f"store does not match shard {shard_id} of the cluster")
            peers = cluster.peers(shard_id)
        else:
            peers = []
            if store.shard.slots != 16**store.n_match and not discard_foreign:
                raise ConfigurationError("a partial-range store needs a cluster config or discard_foreign")

        if peers and transport is None and not discard_foreign:
            raise ConfigurationError("peer shards exist but no transport was given; use discard_foreign to drop them")

        self.buffers: Dict[int, TransferBuffer] = {}
        if not discard_foreign:
            for spec in peers:
                self.buffers[spec.shard_id] = TransferBuffer(
                    spec, self.config.transfer_buffer_capacity, self.config.transfer_flush_threshold
                )

        self._stop = threading.Event()
        self._abort = threading.Event()
        self._cancel = threading.Event()
        self._failure: Optional[BaseException] = None
        self._transfer = MiningStats()

    def _reset(self, cancel: Optional[threading.Event]) -> None:
        self._stop = threading.Event()
        self._abort = threading.Event()
        self._cancel = cancel or threading.Event()
        self._failure = None
        self._transfer = MiningStats()
        self.buffers = {
            shard_id: TransferBuffer(buffer.spec, buffer.capacity, buffer.threshold)
            for shard_id, buffer in self.buffers.items()
        }

    def check_stop(self, workers: int, stop: StopCondition) -> None:
        """ConfigurationError unless a run with these settings can end"""
        if workers < 1:
            raise ConfigurationError("workers must be at least 1")
        slots = self.store.shard.slots
        if stop.target_occupancy is not None and stop.target_occupancy > slots:
            raise ConfigurationError(f"target_occupancy {stop.target_occupancy} exceeds the shard's {slots} slots")

    # ------------------------------------------------------------------

    @staticmethod
    def quotas(target: Optional[int], workers: int) -> List[Optional[int]]:
        """Split target_generated across workers; None means unbounded"""
        if target is None:
            return [None] * workers
        base, extra = divmod(target, workers)
        return [base + (1 if i < extra else 0) for i in range(workers)]

    def _work(self, entropy: EntropySource, stop: StopCondition, quota: Optional[int], started: float, stats: MiningStats) -> None:
        shard = self.store.shard
        n_match = self.store.n_match
        try:
            while not (self._stop.is_set() or self._cancel.is_set()):
                if stop.duration is not None and time.perf_counter() - started >= stop.duration:
                    self._stop.set()
                    break
                if quota is not None and stats.generated >= quota:
                    break
                account = generate_account(entropy)
                slot = slot_key(account.address, n_match, self.config.max_match).value
                stats.generated += 1
                if shard.owns(slot):
                    if self.store.insert(account) is InsertResult.INSERTED:
                        stats.inserted += 1
                        if stop.target_occupancy is not None and self.store.occupancy() >= stop.target_occupancy:
                            self._stop.set()
                    else:
                        stats.ignored_occupied += 1
                elif self.discard_foreign:
                    stats.discarded += 1
                else:
                    owner = self.cluster.route(slot)
                    # counted before the append so an abort while blocked still conserves
                    stats.buffered_for_transfer += 1
                    self.buffers[owner.shard_id].append(account.to_record())
        except MiningAborted as e:
            self._fail(e)
        except StoreError as e:
            self._fail(e)

    def _fail(self, error: BaseException) -> None:
        if self._failure is None:
            self._failure = error
        self._abort.set()
        self._stop.set()
        for buffer in self.buffers.values():
            buffer.abort()

    def _deliver(self, buffer: TransferBuffer, limit: int) -> None:
        batch = buffer.peek(limit)
        if not batch:
            return
        ack = self.transport.deliver(buffer.spec, batch)
        if ack.total != len(batch):
            raise TransferError(f"shard {buffer.spec.shard_id} acked {ack.total} of {len(batch)} records")
        buffer.commit(len(batch))
        self._transfer.transfer_accepted += ack.accepted
        self._transfer.transfer_ignored += ack.ignored
        self._transfer.transfer_batches += 1

    def _flush(self, workers_done: threading.Event) -> None:
        try:
            while not self._abort.is_set():
                done = workers_done.is_set()
                for buffer in self.buffers.values():
                    while buffer.ready or (done and len(buffer)):
                        self._deliver(buffer, buffer.threshold)
                if done:
                    return
                workers_done.wait(0.05)
        except (TransferError, StoreError) as e:
            self.logger.error(f"cooperative transfer failed: {e}")
            self._fail(e)

    # ------------------------------------------------------------------

    def mine(
        self,
        workers: int,
        stop: StopCondition,
        seed: Optional[int] = None,
        cancel: Optional[threading.Event] = None,
    ) -> MiningStats:
        """Run ``workers`` generation loops until ``stop``; return the merged stats.

        Worker i generates its share of ``target_generated`` from substream i
        of ``seed``, so a seeded run produces the same accounts whatever the
        thread interleaving. Setting ``cancel`` ends the run early; buffered
        foreign records are still delivered before returning.
        """
        self.check_stop(workers, stop)
        self._reset(cancel)

        if stop.target_occupancy is not None and self.store.occupancy() >= stop.target_occupancy:
            stats = MiningStats(workers=workers)
            stats.finish(0.0)
            return stats

        entropies = spawn_entropy(seed, workers)
        per_worker = [MiningStats() for _ in range(workers)]
        quotas = self.quotas(stop.target_generated, workers)
        workers_done = threading.Event()
        self.logger.info(
            format_kv({"event": "mining_start", "workers": workers, "n_match": self.store.n_match, "a0": hex(self.store.shard.a0), "a1": hex(self.store.shard.a1), "peers": len(self.buffers)})
        )

        started = time.perf_counter()
        threads = [
            threading.Thread(target=self._work, args=(entropies[i], stop, quotas[i], started, per_worker[i]), name=f"miner-{i}", daemon=True)
            for i in range(workers)
        ]
        flusher = None
        if self.buffers:
            flusher = threading.Thread(target=self._flush, args=(workers_done,), name="transfer-flusher", daemon=True)
            flusher.start()
        for thread in threads:
            thread.start()
        try:
            for thread in threads:
                thread.join()
        except KeyboardInterrupt:
            self._stop.set()
            for thread in threads:
                thread.join()
        workers_done.set()
        if flusher is not None:
            flusher.join()

        stats = MiningStats(workers=workers)
        for partial in per_worker:
            stats.merge(partial)
        stats.transfer_accepted = self._transfer.transfer_accepted
        stats.transfer_ignored = self._transfer.transfer_ignored
        stats.transfer_batches = self._transfer.transfer_batches
        stats.finish(time.perf_counter() - started)

        if self._failure is not None:
            self.logger.error(format_kv({"event": "mining_aborted", "error": self._failure, **stats.to_dict()}))
            raise MiningAborted(f"mining aborted: {self._failure}", stats) from self._failure
        self.logger.info(format_kv({"event": "mining_done", **stats.to_dict()}))
        return stats


def mine(
    store: SlotStore,
    workers: int,
    stop: StopCondition,
    cluster: Optional[ClusterConfig] = None,
    shard_id: int = 0,
    transport: Optional[PeerTransport] = None,
    seed: Optional[int] = None,
    config: Optional[Config] = None,
    discard_foreign: bool = False,
) -> MiningStats:
    """Convenience wrapper building a Miner for one run"""
    miner = Miner(store, cluster, shard_id, transport=transport, config=config, discard_foreign=discard_foreign)
    return miner.mine(workers, stop, seed=seed)
