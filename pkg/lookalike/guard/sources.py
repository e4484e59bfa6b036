"""
Text event sources: recorded logs, followed files, pipes and synthetic streams
"""

import asyncio
import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import AsyncIterator, Iterable, List, Optional, TextIO, Union

import numpy as np

from ..core.accounts import ADDRESS_HEX_LENGTH, Address, eip55_encode
from ..core.errors import ProtocolError
from ..utils.helpers import monotonic_ms
from ..utils.logging import LoggerMixin
from .detector import TextEvent

_ESCAPES = {"\\": "\\\\", "\n": "\\n", "\t": "\\t", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "n": "\n", "t": "\t", "r": "\r"}


def escape_content(text: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


def unescape_content(text: str) -> str:
    out = []
    chars = iter(text)
    for ch in chars:
        if ch == "\\":
            nxt = next(chars, "")
            out.append(_UNESCAPES.get(nxt, "\\" + nxt))
        else:
            out.append(ch)
    return "".join(out)


def format_event(event: TextEvent) -> str:
    return f"{event.timestamp}\t{escape_content(event.content)}"


def parse_event(line: str) -> TextEvent:
    """One event-log line: timestamp-ms TAB escaped content"""
    stamp, sep, content = line.rstrip("\n").partition("\t")
    if not sep:
        raise ProtocolError(f"event line has no tab separator: {line[:40]!r}")
    try:
        timestamp = int(stamp)
    except ValueError as e:
        raise ProtocolError(f"bad event timestamp {stamp!r}") from e
    return TextEvent(timestamp, unescape_content(content))


def write_event_log(events: Iterable[TextEvent], path: Union[str, Path]) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for event in events:
            f.write(format_event(event) + "\n")
            count += 1
    return count


class TextSource(ABC):
    """Async stream of TextEvents in non-decreasing timestamp order"""

    name: str = "source"

    @abstractmethod
    def events(self) -> AsyncIterator[TextEvent]:
        """Yield events until the source ends"""


class ReplaySource(TextSource, LoggerMixin):
    """Replay a recorded event log; malformed lines are skipped with a warning"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.name = f"replay:{self.path}"

    async def events(self) -> AsyncIterator[TextEvent]:
        with open(self.path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    yield parse_event(line)
                except ProtocolError as e:
                    self.logger.warning(f"{self.path}:{lineno}: {e}")


class StreamSource(TextSource):
    """One event per line read from a text stream (stdin by default), stamped on arrival"""

    def __init__(self, stream: Optional[TextIO] = None):
        self.stream = stream or sys.stdin
        self.name = "stream"

    async def events(self) -> AsyncIterator[TextEvent]:
        loop = asyncio.get_running_loop()
        while True:
            line = await loop.run_in_executor(None, self.stream.readline)
            if not line:
                return
            yield TextEvent(monotonic_ms(), line.rstrip("\n"))


class TailSource(TextSource):
    """Follow a file: each appended line becomes an event.

    Stops after ``idle_timeout`` seconds without new data when one is set,
    otherwise runs until cancelled.
    """

    def __init__(self, path: Union[str, Path], poll_interval: float = 0.2, idle_timeout: Optional[float] = None, from_start: bool = False):
        self.path = Path(path)
        self.poll_interval = poll_interval
        self.idle_timeout = idle_timeout
        self.from_start = from_start
        self.name = f"tail:{self.path}"

    async def events(self) -> AsyncIterator[TextEvent]:
        with open(self.path, "r", encoding="utf-8") as f:
            if not self.from_start:
                f.seek(0, 2)
            idle = 0.0
            pending = ""
            while True:
                chunk = f.readline()
                if chunk:
                    idle = 0.0
                    pending += chunk
                    if pending.endswith("\n"):
                        yield TextEvent(monotonic_ms(), pending.rstrip("\n"))
                        pending = ""
                    continue
                if self.idle_timeout is not None and idle >= self.idle_timeout:
                    return
                await asyncio.sleep(self.poll_interval)
                idle += self.poll_interval


class IterableSource(TextSource):
    """Events already in memory"""

    def __init__(self, events: Iterable[TextEvent]):
        self._events = list(events)
        self.name = "memory"

    async def events(self) -> AsyncIterator[TextEvent]:
        for event in self._events:
            yield event


@dataclass(frozen=True)
class SyntheticStream:
    events: List[TextEvent]
    planted: int


def similar_address(original: Address, n_match: int, rng: np.random.Generator) -> Address:
    """Address sharing exactly the outer n_match digits with ``original`` (interior edited)"""
    prefix_len, suffix_len = (n_match + 1) // 2, n_match // 2
    text = original.value
    while True:
        middle = rng.bytes(ADDRESS_HEX_LENGTH).hex()[: ADDRESS_HEX_LENGTH - n_match]
        candidate = text[:prefix_len] + middle + (text[ADDRESS_HEX_LENGTH - suffix_len:] if suffix_len else "")
        # the digit just inside each matched edge differs, so the match is exactly n_match
        if candidate[prefix_len] != text[prefix_len] and candidate[-suffix_len - 1] != text[-suffix_len - 1]:
            return Address(candidate)


def _random_address(rng: np.random.Generator) -> Address:
    return Address(rng.bytes(20).hex())


def synthetic_stream(
    events: int,
    planted: int,
    seed: Optional[int] = None,
    window_ms: int = 10_000,
    n_match: int = 8,
) -> SyntheticStream:
    """Copy/paste traffic with ``planted`` substitutions hidden among benign events.

    A substitution is a copied address followed 1 s later by a similar one.
    Benign copies are separated by more than the window, so only planted
    pairs should raise ADDRESS_REPLACED.
    """
    if planted * 2 > events:
        raise ValueError("need at least two events per planted substitution")
    rng = np.random.default_rng(seed)
    # units are single benign events or planted pairs
    units = events - planted
    plant_at = set(rng.choice(units, size=planted, replace=False).tolist()) if planted else set()

    out: List[TextEvent] = []
    clock = 0
    for unit in range(units):
        clock += window_ms + 1 + int(rng.integers(0, 5000))
        if unit in plant_at:
            victim = _random_address(rng)
            out.append(TextEvent(clock, f"send to {eip55_encode(victim)}"))
            clock += 1000
            out.append(TextEvent(clock, eip55_encode(similar_address(victim, n_match, rng))))
            continue
        kind = int(rng.integers(0, 3))
        if kind == 0:
            out.append(TextEvent(clock, f"meeting notes {int(rng.integers(0, 1 << 30))}"))
        elif kind == 1:
            out.append(TextEvent(clock, eip55_encode(_random_address(rng))))
        else:
            out.append(TextEvent(clock, "0x" + _random_address(rng).value))
    return SyntheticStream(out, planted)


def attack_replay(seed: Optional[int] = None, n_match: int = 8) -> List[TextEvent]:
    """The two events of one simulated attack: copy, then substituted paste"""
    rng = np.random.default_rng(seed)
    victim = _random_address(rng)
    return [
        TextEvent(0, eip55_encode(victim)),
        TextEvent(1000, eip55_encode(similar_address(victim, n_match, rng))),
    ]

