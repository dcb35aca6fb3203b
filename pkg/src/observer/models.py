"""Timing report models."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any


class ViolationType(Enum):
    """Ways a timed result can fail verification."""
    ORACLE_MISMATCH = "oracle_mismatch"
    RANK_DISAGREEMENT = "rank_disagreement"
    SHAPE_MISMATCH = "shape_mismatch"


@dataclass
class CorrectnessViolation:
    """A result that disagreed with its oracle; its timing is suppressed."""
    type: ViolationType
    scenario: str
    workers: int
    message: str
    details: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class TimingRow:
    """One verified timing."""
    scenario: str
    workers: int
    seconds: float
    checksum: str


@dataclass
class TimingReport:
    """Verified timing rows plus any correctness violations."""
    rows: list[TimingRow]
    violations: list[CorrectnessViolation]

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def summary(self) -> str:
        if self.ok:
            return f"{len(self.rows)} timings verified"
        return f"{len(self.violations)} correctness violations; timings suppressed"
