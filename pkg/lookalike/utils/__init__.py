"""
Utils package initialization
"""

from .logging import setup_logging, get_logger, format_kv, LoggerMixin
from .helpers import (
    ensure_directory,
    load_json,
    save_json,
    rfc3339_now,
    monotonic_ms,
    format_duration,
    format_binary_size,
    strip_hex_prefix,
)

__all__ = [
    "setup_logging",
    "get_logger",
    "format_kv",
    "LoggerMixin",
    "ensure_directory",
    "load_json",
    "save_json",
    "rfc3339_now",
    "monotonic_ms",
    "format_duration",
    "format_binary_size",
    "strip_hex_prefix",
]
