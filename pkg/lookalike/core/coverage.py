"""
Coverage, storage and time planning for slot databases, with Monte-Carlo oracles
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, List, Optional

import numpy as np

from .accounts import RECORD_SIZE

SECONDS_PER_DAY = 86400.0
MONTE_CARLO_MAX_SPACE = 10_000_000
_DRAW_CHUNK = 1 << 20

# Rounded multipliers used in the published planning tables.
ROUNDED_TAU = {0.95: 3.0, 0.63: 1.0, 0.5: 0.7}
_ROUNDED_TAU_TOLERANCE = 0.005


@dataclass(frozen=True)
class DeploymentProfile:
    """Reference hardware, kept as report metadata only"""

    name: str
    description: str
    monthly_cost: Optional[str] = None
    accounts_per_second: Optional[float] = None


# The PC rate is the one implied by 467.84 days for 50% coverage at N=10.
DEPLOYMENT_PROFILES: Dict[str, DeploymentProfile] = {
    "azure": DeploymentProfile("azure", "H-Series HB60rs VM, 60 CPUs, 223.52 GB RAM", "$1,664.40/mo"),
    "do-": DeploymentProfile("do-", "Basic droplet, 1 vCPU, 1 GB RAM", "$5/mo"),
    "do+": DeploymentProfile("do+", "CPU-optimized droplet, 32 CPUs, 64 GB RAM", "$640/mo"),
    "pc": DeploymentProfile(
        "pc",
        "Office PC, 16-core/32-thread CPU, 70.6 GB RAM",
        None,
        0.7 * 16**10 / (467.84 * SECONDS_PER_DAY),
    ),
}


def expected_coverage(generated: float, space: int) -> float:
    """Taylor form C = 1 - e^(-n/M)"""
    if generated < 0 or space < 1:
        raise ValueError("expected_coverage needs generated >= 0 and space >= 1")
    return -math.expm1(-generated / space)


def exact_expected_coverage(generated: int, space: int) -> float:
    """Exact expectation 1 - (1 - 1/M)^n of the distinct fraction"""
    if generated < 0 or space < 1:
        raise ValueError("exact_expected_coverage needs generated >= 0 and space >= 1")
    if space == 1:
        return 1.0 if generated > 0 else 0.0
    return -math.expm1(generated * math.log1p(-1.0 / space))


def tau_for_coverage(target: float) -> float:
    """Generation multiplier that reaches a target coverage: -ln(1 - C)"""
    if not 0.0 < target < 1.0:
        raise ValueError(f"coverage target must lie in (0, 1), got {target}")
    return -math.log1p(-target)


def rounded_tau_for(target: float) -> float:
    """Rounded multiplier (3, 1, 0.7) when the target is a tabulated one, exact otherwise"""
    for coverage, tau in ROUNDED_TAU.items():
        if abs(target - coverage) <= _ROUNDED_TAU_TOLERANCE:
            return tau
    return tau_for_coverage(target)


@dataclass(frozen=True)
class StorageRequirement:
    n_match: int
    servers: int
    total_bytes: int
    per_server_bytes: int


def storage_required(n_match: int, servers: int = 1) -> StorageRequirement:
    """104 * 16^N in total; per server rounded up to whole octets"""
    if n_match < 1 or servers < 1:
        raise ValueError("storage_required needs n_match >= 1 and servers >= 1")
    total = RECORD_SIZE * 16**n_match
    return StorageRequirement(n_match, servers, total, -(-total // servers))


def time_to_coverage(rate: float, target: float, n_match: int, rounded: bool = False) -> float:
    """Seconds of mining at ``rate`` accounts/s to reach the target coverage"""
    if rate <= 0:
        raise ValueError("rate must be positive")
    tau = rounded_tau_for(target) if rounded else tau_for_coverage(target)
    return tau * 16**n_match / rate


@dataclass(frozen=True)
class CoverageModel:
    """One planning row: N, tau, coverage, accounts, storage and time"""

    n_match: int
    tau: float
    coverage: float
    accounts: float
    storage_bytes: int
    servers: int = 1
    storage_per_server: int = 0
    rate: Optional[float] = None
    time_estimate: Optional[float] = None

    @classmethod
    def build(
        cls,
        n_match: int,
        target: float,
        rate: Optional[float] = None,
        servers: int = 1,
        rounded: bool = False,
    ) -> "CoverageModel":
        tau = rounded_tau_for(target) if rounded else tau_for_coverage(target)
        storage = storage_required(n_match, servers)
        space = 16**n_match
        return cls(
            n_match=n_match,
            tau=tau,
            coverage=expected_coverage(tau * space, space),
            accounts=tau * space,
            storage_bytes=storage.total_bytes,
            servers=servers,
            storage_per_server=storage.per_server_bytes,
            rate=rate,
            time_estimate=None if rate is None else tau * space / rate,
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def plan_table(
    n_values: Iterable[int],
    targets: Iterable[float],
    rate: Optional[float] = None,
    servers: int = 1,
    rounded: bool = False,
) -> List[CoverageModel]:
    """Planning rows for every (N, target) pair"""
    targets = list(targets)
    return [
        CoverageModel.build(n, target, rate=rate, servers=servers, rounded=rounded)
        for n in n_values
        for target in targets
    ]


def _check_space(space: int, draws: int) -> None:
    if not 1 <= space <= MONTE_CARLO_MAX_SPACE:
        raise ValueError(f"space must be in [1, {MONTE_CARLO_MAX_SPACE}]")
    if draws < 0:
        raise ValueError("draws must be non-negative")


def monte_carlo_distinct(space: int, draws: int, seed: Optional[int] = None) -> int:
    """Count distinct values among ``draws`` uniform integers in [0, space)"""
    _check_space(space, draws)
    rng = np.random.default_rng(seed)
    seen = np.zeros(space, dtype=bool)
    remaining = draws
    while remaining > 0:
        chunk = min(remaining, _DRAW_CHUNK)
        seen[rng.integers(0, space, size=chunk)] = True
        remaining -= chunk
    return int(np.count_nonzero(seen))


def monte_carlo_collision_fraction(space: int, draws: int, seed: Optional[int] = None) -> float:
    """Fraction of draws whose value is shared with at least one other draw"""
    _check_space(space, draws)
    if draws == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    counts = np.zeros(space, dtype=np.int64)
    remaining = draws
    while remaining > 0:
        chunk = min(remaining, _DRAW_CHUNK)
        counts += np.bincount(rng.integers(0, space, size=chunk), minlength=space)
        remaining -= chunk
    return 1.0 - int(np.count_nonzero(counts == 1)) / draws


@dataclass(frozen=True)
class TrialSummary:
    space: int
    draws: int
    trials: int
    mean_ratio: float
    std_ratio: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def monte_carlo_trials(space: int, draws: int, seeds: Iterable[int], workers: int = 1) -> TrialSummary:
    """Mean and spread of distinct/space over independent seeds"""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(lambda s: monte_carlo_distinct(space, draws, s), seeds))
    else:
        counts = [monte_carlo_distinct(space, draws, s) for s in seeds]
    ratios = np.asarray(counts, dtype=float) / space
    return TrialSummary(
        space=space,
        draws=draws,
        trials=len(seeds),
        mean_ratio=float(ratios.mean()),
        std_ratio=float(ratios.std(ddof=1)) if len(seeds) > 1 else 0.0,
    )
