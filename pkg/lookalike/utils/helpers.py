"""
Helper utility functions
"""

import json
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Union

BINARY_UNITS = ("B", "KiB", "MiB", "GiB", "TiB", "PiB", "EiB")


def ensure_directory(path: Union[str, Path]) -> Path:
    """Ensure directory exists, create if it doesn't"""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_json(file_path: Union[str, Path]) -> Dict[str, Any]:
    """Load JSON from file"""
    with open(file_path, "r", encoding="utf-8") as f:
        return json.load(f)


def save_json(data: Dict[str, Any], file_path: Union[str, Path]) -> None:
    """Save data to JSON file"""
    path = Path(file_path)
    if path.parent != Path("."):
        ensure_directory(path.parent)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)


def rfc3339_now() -> str:
    """Current UTC time as an RFC 3339 timestamp"""
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def monotonic_ms() -> int:
    """Monotonic clock in whole milliseconds"""
    return time.monotonic_ns() // 1_000_000


def format_duration(seconds: float) -> str:
    """Format a duration in seconds for display"""
    if seconds < 1:
        return f"{seconds * 1000:.0f}ms"
    elif seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 86400:
        minutes = int(seconds // 60)
        return f"{minutes}m {seconds % 60:.1f}s"
    else:
        return f"{seconds / 86400:.2f} days"


def format_binary_size(num_bytes: float) -> str:
    """Format a byte count with binary units, trimming trailing zeros (6.5 MiB, 1.625 GiB)"""
    value = float(num_bytes)
    unit = BINARY_UNITS[0]
    for unit in BINARY_UNITS:
        if value < 1024 or unit == BINARY_UNITS[-1]:
            break
        value /= 1024
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return f"{text} {unit}"


def strip_hex_prefix(text: str) -> str:
    """Remove a leading 0x/0X if present"""
    if text[:2] in ("0x", "0X"):
        return text[2:]
    return text
