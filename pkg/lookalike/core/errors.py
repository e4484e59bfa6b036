"""
Exception hierarchy for lookalike
"""

from typing import Optional


class LookalikeError(Exception):
    """Base class for all lookalike errors"""


class ConfigurationError(LookalikeError, ValueError):
    """Invalid configuration value, range or cluster layout"""


class StoreError(LookalikeError):
    """Base class for shard store failures"""


class StoreIOError(StoreError):
    """Fatal I/O failure on a shard file"""


class StoreCorruptionError(StoreError):
    """Shard file contents contradict the record format or the metadata"""

    def __init__(self, message: str, slot: Optional[int] = None):
        if slot is not None:
            message = f"slot {slot:#x}: {message}"
        super().__init__(message)
        self.slot = slot


class ProtocolError(LookalikeError):
    """Malformed query or transfer wire data"""


class TransferError(LookalikeError):
    """Cooperative transfer could not be completed"""


class MiningAborted(LookalikeError):
    """Mining stopped on a fatal error; ``stats`` holds what was done so far"""

    def __init__(self, message: str, stats=None):
        super().__init__(message)
        self.stats = stats
