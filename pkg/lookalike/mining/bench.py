"""
Mining throughput benchmark across worker counts
"""

import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from ..core.config import Config
from ..core.errors import ConfigurationError
from ..storage.base import ShardFile
from ..storage.shard_store import open_shard
from ..utils.logging import get_logger, format_kv
from .miner import MiningStats, StopCondition, mine

logger = get_logger("bench")


@dataclass(frozen=True)
class BenchRow:
    workers: int
    accounts: int
    elapsed: float
    rate: float
    stats: MiningStats

    def to_dict(self) -> Dict[str, Any]:
        return {"workers": self.workers, "accounts": self.accounts, "elapsed": self.elapsed, "rate": self.rate}


def bench(
    worker_counts: Iterable[int],
    accounts_per_worker: int,
    n_match: int = 4,
    seed: Optional[int] = None,
    work_dir: Optional[Union[str, Path]] = None,
    config: Optional[Config] = None,
) -> List[BenchRow]:
    """Mine workers x accounts_per_worker accounts per row into a throwaway full-range store"""
    counts = list(worker_counts)
    if not counts or any(w < 1 for w in counts):
        raise ConfigurationError("worker counts must be positive")
    if accounts_per_worker < 0:
        raise ConfigurationError("accounts_per_worker must be non-negative")

    rows: List[BenchRow] = []
    with tempfile.TemporaryDirectory(prefix="lookalike-bench-", dir=work_dir) as tmp:
        for workers in counts:
            shard = ShardFile(Path(tmp) / f"bench-{workers}.dat", 0, 16**n_match, n_match)
            with open_shard(shard, config=config) as store:
                total = workers * accounts_per_worker
                stats = mine(store, workers, StopCondition.generated(total), seed=seed, config=config)
            row = BenchRow(workers, stats.generated, stats.elapsed, stats.rate, stats)
            logger.info(format_kv({"event": "bench_row", **row.to_dict()}))
            rows.append(row)
    return rows
