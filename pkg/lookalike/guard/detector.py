"""
Address-substitution detector over a stream of text events
"""

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from ..core.accounts import Address, ChecksumStatus, eip55_verify, normalize_address
from ..storage.slots import matches

ADDRESS_PATTERN = re.compile(r"(?<![0-9A-Za-z])0x[0-9a-fA-F]{40}(?![0-9A-Za-z])")
MATCH_LEVELS = (4, 6, 8, 10)
DEFAULT_WINDOW_MS = 10_000


@dataclass(frozen=True)
class TextEvent:
    """One observed text value (e.g. clipboard contents) at a monotonic timestamp"""

    timestamp: int
    content: str


class AlertKind(Enum):
    ADDRESS_APPEARED = "ADDRESS_APPEARED"
    ADDRESS_REPLACED = "ADDRESS_REPLACED"
    EIP55_INVALID = "EIP55_INVALID"


@dataclass(frozen=True)
class AlertEvent:
    kind: AlertKind
    timestamp: int
    address: Address
    previous: Optional[Address] = None
    matched: Optional[int] = None
    text: Optional[str] = None

    def describe(self) -> str:
        if self.kind is AlertKind.ADDRESS_REPLACED:
            return f"{self.previous.checksummed()} -> {self.address.checksummed()} ({self.matched} matching symbols)"
        if self.kind is AlertKind.EIP55_INVALID:
            return f"{self.text} fails its EIP-55 checksum"
        return self.address.checksummed()


@dataclass(frozen=True)
class GuardState:
    last_address: Optional[Address] = None
    last_seen: Optional[int] = None


def matched_symbols(old: Address, new: Address) -> int:
    """Largest N in MATCH_LEVELS at which both addresses share prefix and suffix digits, else 0"""
    best = 0
    for n_match in MATCH_LEVELS:
        if matches(old, new, n_match):
            best = n_match
    return best


def extract_addresses(content: str) -> List[str]:
    return ADDRESS_PATTERN.findall(content)


def scan_text(event: TextEvent, state: GuardState, window_ms: int = DEFAULT_WINDOW_MS) -> Tuple[List[AlertEvent], GuardState]:
    """Alerts for one event and the state that follows it.

    Pure: the same event stream and window always produce the same alerts.
    """
    alerts: List[AlertEvent] = []
    last, last_seen = state.last_address, state.last_seen

    for text in extract_addresses(event.content):
        address = normalize_address(text)
        body = text[2:]
        mixed_case = body != body.lower() and body != body.upper()
        if mixed_case and eip55_verify(text) is ChecksumStatus.INVALID:
            alerts.append(AlertEvent(AlertKind.EIP55_INVALID, event.timestamp, address, text=text))

        if address != last:
            in_window = last is not None and last_seen is not None and event.timestamp - last_seen <= window_ms
            if in_window:
                alerts.append(
                    AlertEvent(
                        AlertKind.ADDRESS_REPLACED,
                        event.timestamp,
                        address,
                        previous=last,
                        matched=matched_symbols(last, address),
                    )
                )
            else:
                alerts.append(AlertEvent(AlertKind.ADDRESS_APPEARED, event.timestamp, address))
        last, last_seen = address, event.timestamp

    return alerts, GuardState(last, last_seen)


@dataclass
class Detector:
    """Stateful wrapper around scan_text for one source"""

    window_ms: int = DEFAULT_WINDOW_MS
    state: GuardState = field(default_factory=GuardState)

    def feed(self, event: TextEvent) -> List[AlertEvent]:
        alerts, self.state = scan_text(event, self.state, self.window_ms)
        return alerts
