"""
Guard package initialization
"""

from .detector import AlertEvent, AlertKind, Detector, GuardState, TextEvent, scan_text
from .sinks import AlertLogSink, ConsoleSink, SinkManager, watch
from .sources import ReplaySource, StreamSource, TailSource, synthetic_stream, write_event_log

__all__ = [
    "AlertEvent",
    "AlertKind",
    "Detector",
    "GuardState",
    "TextEvent",
    "scan_text",
    "AlertLogSink",
    "ConsoleSink",
    "SinkManager",
    "watch",
    "ReplaySource",
    "StreamSource",
    "TailSource",
    "synthetic_stream",
    "write_event_log",
]
