"""
One shard's server roles running side by side: query service, transfer receiver and an optional miner
"""

import asyncio
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

from ..core.config import Config
from ..storage.shard_store import ShardStore, open_shard
from ..utils.logging import LoggerMixin, format_kv
from .config import ClusterConfig
from .query_service import HitLog, QueryService
from .transfer import NetworkTransport, PeerTransport, TransferServer

if TYPE_CHECKING:
    from ..mining.miner import Miner, MiningStats, StopCondition


@dataclass(frozen=True)
class MiningPlan:
    """A mining run hosted by a serving node"""

    workers: int
    stop: "StopCondition"
    seed: Optional[int] = None
    discard_foreign: bool = False


class ShardNode(LoggerMixin):
    """Owns the store of one shard and the roles that share it.

    ``start`` binds both endpoints (port 0 picks a free port) and
    ``cluster`` is updated with the bound ports so clients can route to them.
    With a ``mining`` plan the miner runs on an executor thread against the
    same store; ``stop`` cancels it and waits for its transfer buffers to drain.
    """

    def __init__(
        self,
        cluster: ClusterConfig,
        shard_id: int,
        config: Optional[Config] = None,
        store: Optional[ShardStore] = None,
        hit_log: Optional[HitLog] = None,
        transfer: bool = True,
        mining: Optional[MiningPlan] = None,
        transport: Optional[PeerTransport] = None,
    ):
        self.cluster = cluster
        self.shard_id = shard_id
        self.config = config or Config()
        self.spec = cluster.shard(shard_id)
        self._owns_store = store is None
        self.store = store or open_shard(self.spec.shard_file(cluster.n_match), config=self.config)

        self.mining = mining
        self.miner: Optional["Miner"] = None
        self.mining_task: Optional[asyncio.Future] = None
        self.mining_stats: Optional["MiningStats"] = None
        self.mining_error: Optional[BaseException] = None
        self._mining_recorded = False
        self._cancel = threading.Event()
        self.transport = transport
        if mining is not None:
            try:
                self.miner = self._build_miner(mining)
                self.miner.check_stop(mining.workers, mining.stop)
            except Exception:
                if self._owns_store:
                    self.store.close()
                raise

        self._owns_hit_log = hit_log is None
        self.hit_log = hit_log or HitLog(cluster.hit_log)
        self.query_service = QueryService(self.store, self.spec, hit_log=self.hit_log)
        self.transfer_server: Optional[TransferServer] = TransferServer(self.store, self.spec) if transfer else None

    def _build_miner(self, plan: MiningPlan) -> "Miner":
        # imported here: the mining package depends on this one
        from ..mining.miner import Miner

        if self.transport is None and self.cluster.peers(self.shard_id) and not plan.discard_foreign:
            self.transport = NetworkTransport(self.cluster.n_match, self.config)
        return Miner(
            self.store, self.cluster, self.shard_id, transport=self.transport, config=self.config, discard_foreign=plan.discard_foreign
        )

    async def start(self) -> ClusterConfig:
        _, query_port = await self.query_service.start()
        transfer_port = None
        if self.transfer_server is not None:
            _, transfer_port = await self.transfer_server.start()
        self.cluster = self.cluster.with_ports(self.shard_id, query_port=query_port, transfer_port=transfer_port)
        self.spec = self.cluster.shard(self.shard_id)
        self.query_service.spec = self.spec
        if self.transfer_server is not None:
            self.transfer_server.spec = self.spec
        self.logger.info(
            format_kv({"event": "node_up", "shard": self.shard_id, "query_port": query_port, "transfer_port": transfer_port, "occupancy": self.store.occupancy()})
        )
        if self.miner is not None and self.mining is not None:
            loop = asyncio.get_running_loop()
            plan = self.mining
            self.mining_task = loop.run_in_executor(None, self.miner.mine, plan.workers, plan.stop, plan.seed, self._cancel)
            self.mining_task.add_done_callback(self._record_mining)
        return self.cluster

    @property
    def mining_active(self) -> bool:
        return self.mining_task is not None and not self.mining_task.done()

    def _record_mining(self, future: asyncio.Future) -> None:
        if self._mining_recorded or future.cancelled():
            return
        self._mining_recorded = True
        error = future.exception()
        if error is None:
            self.mining_stats = future.result()
            self.logger.info(format_kv({"event": "node_mining_done", "shard": self.shard_id, **self.mining_stats.to_dict()}))
        else:
            self.mining_error = error
            self.mining_stats = getattr(error, "stats", None)
            self.logger.error(format_kv({"event": "node_mining_failed", "shard": self.shard_id, "error": error}))

    async def stop_mining(self) -> None:
        """Cancel the miner and wait until its buffered records are delivered"""
        if self.mining_task is None:
            return
        self._cancel.set()
        done, _ = await asyncio.wait({self.mining_task}, timeout=self.config.transfer_timeout)
        if not done:
            self.logger.warning(format_kv({"event": "node_mining_drain_slow", "shard": self.shard_id, "waited": self.config.transfer_timeout}))
            if self.transport is not None:
                # the next failed attempt gives up instead of backing off
                self.transport.close()
            await asyncio.wait({self.mining_task})
        self._record_mining(self.mining_task)

    async def stop(self) -> None:
        await self.stop_mining()
        await self.query_service.stop()
        if self.transfer_server is not None:
            await self.transfer_server.stop()
        if self._owns_hit_log:
            self.hit_log.close()
        if self._owns_store:
            self.store.close()
        else:
            self.store.sync()
        self.logger.info(format_kv({"event": "node_down", "shard": self.shard_id}))

    async def __aenter__(self) -> "ShardNode":
        await self.start()
        return self

    async def __aexit__(self, exc_type, exc, tb) -> None:
        await self.stop()
