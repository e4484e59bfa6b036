"""
Alert sinks and the watch loop
"""

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from rich.console import Console

from ..utils.helpers import rfc3339_now
from ..utils.logging import LoggerMixin, format_kv
from .detector import DEFAULT_WINDOW_MS, AlertEvent, AlertKind, Detector
from .sources import TextSource

_STYLES = {
    AlertKind.ADDRESS_APPEARED: "cyan",
    AlertKind.ADDRESS_REPLACED: "bold red",
    AlertKind.EIP55_INVALID: "bold yellow",
}


def format_alert_line(alert: AlertEvent, when: Optional[str] = None) -> str:
    """Alert-log line: RFC 3339 timestamp, kind, addresses, matched-symbol count"""
    parts = [when or rfc3339_now(), alert.kind.value]
    if alert.kind is AlertKind.ADDRESS_REPLACED:
        parts += [str(alert.previous), str(alert.address), str(alert.matched)]
    else:
        parts += [str(alert.address), "-"]
    return " ".join(parts)


class BaseSink(ABC):
    """Destination for alerts"""

    name: str = "sink"

    @abstractmethod
    def emit(self, alert: AlertEvent) -> None:
        """Deliver one alert"""

    def close(self) -> None:
        pass


class ConsoleSink(BaseSink):
    def __init__(self, console: Optional[Console] = None):
        self.console = console or Console()
        self.name = "console"

    def emit(self, alert: AlertEvent) -> None:
        style = _STYLES[alert.kind]
        self.console.print(f"[{style}]{alert.kind.value}[/{style}] {alert.describe()}")


class AlertLogSink(BaseSink):
    """Append alerts to a text log, one line each"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._file = open(self.path, "a", encoding="ascii")
        self.name = f"log:{self.path}"

    def emit(self, alert: AlertEvent) -> None:
        with self._lock:
            self._file.write(format_alert_line(alert) + "\n")
            self._file.flush()

    def close(self) -> None:
        with self._lock:
            if not self._file.closed:
                self._file.close()


class MemorySink(BaseSink):
    def __init__(self):
        self.alerts: List[AlertEvent] = []
        self.name = "memory"

    def emit(self, alert: AlertEvent) -> None:
        self.alerts.append(alert)


class SinkManager(LoggerMixin):
    """Fans alerts out to every sink; a failing sink is reported and skipped"""

    def __init__(self, sinks: Optional[List[BaseSink]] = None):
        self.sinks: List[BaseSink] = list(sinks or [])
        self.failures: Dict[str, int] = {}

    def add(self, sink: BaseSink) -> None:
        self.sinks.append(sink)

    def emit(self, alert: AlertEvent) -> None:
        for sink in self.sinks:
            try:
                sink.emit(alert)
            except Exception as e:
                self.failures[sink.name] = self.failures.get(sink.name, 0) + 1
                self.logger.error(f"sink {sink.name} failed: {e}")

    def close(self) -> None:
        for sink in self.sinks:
            try:
                sink.close()
            except Exception as e:
                self.logger.error(f"closing sink {sink.name} failed: {e}")


@dataclass
class WatchSummary:
    events: int = 0
    alerts: Dict[str, int] = field(default_factory=lambda: {kind.value: 0 for kind in AlertKind})
    sink_failures: Dict[str, int] = field(default_factory=dict)


async def watch(source: TextSource, sinks: SinkManager, window_ms: int = DEFAULT_WINDOW_MS) -> WatchSummary:
    """Run the detector over a source until it ends, forwarding every alert"""
    detector = Detector(window_ms=window_ms)
    summary = WatchSummary()
    logger = sinks.logger
    logger.info(format_kv({"event": "guard_start", "source": source.name, "window_ms": window_ms}))
    async for event in source.events():
        summary.events += 1
        for alert in detector.feed(event):
            summary.alerts[alert.kind.value] += 1
            sinks.emit(alert)
    summary.sink_failures = dict(sinks.failures)
    logger.info(format_kv({"event": "guard_done", "events": summary.events, **summary.alerts}))
    return summary
