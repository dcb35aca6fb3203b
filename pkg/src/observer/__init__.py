"""Timing observer for benchmark and pipeline runs."""

from .models import CorrectnessViolation, TimingReport, TimingRow, ViolationType
from .observer import TimingObserver, checksum

__all__ = [
    "CorrectnessViolation",
    "TimingObserver",
    "TimingReport",
    "TimingRow",
    "ViolationType",
    "checksum",
]
