"""
Configuration management for lookalike
"""

import os
from dataclasses import dataclass

from dotenv import load_dotenv

from .errors import ConfigurationError

ENV_PREFIX = "LOOKALIKE_"


def _env(name: str, default: str) -> str:
    return os.getenv(f"{ENV_PREFIX}{name}", default)


@dataclass
class Config:
    """Runtime settings shared by the miner, the services and the guard"""

    # Logging
    log_level: str = "INFO"

    # Query client
    query_timeout_ms: int = 500
    query_retries: int = 1

    # Cooperative transfer
    transfer_flush_threshold: int = 4096
    transfer_buffer_capacity: int = 16384
    transfer_backoff_base: float = 1.0
    transfer_backoff_cap: float = 60.0
    transfer_timeout: float = 10.0

    # Guard
    guard_window_ms: int = 10_000

    # Storage
    max_match: int = 16
    paranoid_reads: bool = False
    metadata_sync_interval: int = 10_000
    lock_stripes: int = 1024

    @classmethod
    def from_env(cls) -> "Config":
        """Load configuration from environment variables"""
        load_dotenv()

        try:
            return cls._from_environ()
        except ValueError as e:
            raise ConfigurationError(f"bad {ENV_PREFIX}* environment value: {e}") from e

    @classmethod
    def _from_environ(cls) -> "Config":
        return cls(
            log_level=_env("LOG_LEVEL", "INFO"),
            query_timeout_ms=int(_env("QUERY_TIMEOUT_MS", "500")),
            query_retries=int(_env("QUERY_RETRIES", "1")),
            transfer_flush_threshold=int(_env("TRANSFER_FLUSH_THRESHOLD", "4096")),
            transfer_buffer_capacity=int(_env("TRANSFER_BUFFER_CAPACITY", "16384")),
            transfer_backoff_base=float(_env("TRANSFER_BACKOFF_BASE", "1.0")),
            transfer_backoff_cap=float(_env("TRANSFER_BACKOFF_CAP", "60.0")),
            transfer_timeout=float(_env("TRANSFER_TIMEOUT", "10.0")),
            guard_window_ms=int(_env("GUARD_WINDOW_MS", "10000")),
            max_match=int(_env("MAX_MATCH", "16")),
            paranoid_reads=_env("PARANOID_READS", "false").lower() == "true",
            metadata_sync_interval=int(_env("METADATA_SYNC_INTERVAL", "10000")),
            lock_stripes=int(_env("LOCK_STRIPES", "1024")),
        )

    def validate(self) -> None:
        """Validate the configuration"""
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigurationError(f"unknown log level: {self.log_level}")

        if self.query_timeout_ms <= 0:
            raise ConfigurationError("query_timeout_ms must be positive")

        if self.query_retries < 0:
            raise ConfigurationError("query_retries must be non-negative")

        if not 0 < self.transfer_flush_threshold <= self.transfer_buffer_capacity:
            raise ConfigurationError("transfer_flush_threshold must be in (0, transfer_buffer_capacity]")

        if self.transfer_backoff_base <= 0 or self.transfer_backoff_cap < self.transfer_backoff_base:
            raise ConfigurationError("transfer backoff requires 0 < base <= cap")

        if self.transfer_timeout <= 0:
            raise ConfigurationError("transfer_timeout must be positive")

        if self.guard_window_ms < 0:
            raise ConfigurationError("guard_window_ms must be non-negative")

        if not 1 <= self.max_match <= 40:
            raise ConfigurationError("max_match must be between 1 and 40")

        if self.metadata_sync_interval <= 0:
            raise ConfigurationError("metadata_sync_interval must be positive")

        if self.lock_stripes <= 0:
            raise ConfigurationError("lock_stripes must be positive")

    @property
    def query_timeout(self) -> float:
        """Query timeout in seconds"""
        return self.query_timeout_ms / 1000.0
