"""
Core package initialization
"""

from .accounts import Account, Address, ChecksumStatus, PrivateKey, eip55_encode, eip55_verify, generate_account
from .config import Config
from .coverage import CoverageModel, expected_coverage, storage_required, tau_for_coverage, time_to_coverage
from .errors import ConfigurationError, LookalikeError

__all__ = [
    "Account",
    "Address",
    "ChecksumStatus",
    "PrivateKey",
    "eip55_encode",
    "eip55_verify",
    "generate_account",
    "Config",
    "CoverageModel",
    "expected_coverage",
    "storage_required",
    "tau_for_coverage",
    "time_to_coverage",
    "ConfigurationError",
    "LookalikeError",
]
