"""
Mining package initialization
"""

from .bench import BenchRow, bench
from .miner import Miner, MiningStats, StopCondition, TransferBuffer, mine

__all__ = ["BenchRow", "bench", "Miner", "MiningStats", "StopCondition", "TransferBuffer", "mine"]
