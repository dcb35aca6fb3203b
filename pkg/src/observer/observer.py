"""Timing observer: a timing is only reported for a result that matches its oracle."""

import csv
import hashlib
import logging
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from src.core.errors import CorrectnessError

from .models import CorrectnessViolation, TimingReport, TimingRow, ViolationType

logger = logging.getLogger(__name__)

CSV_HEADER = ("scenario", "workers", "seconds", "checksum")


def checksum(array: np.ndarray) -> str:
    """sha256 of the little-endian float32 bytes of ``array``."""
    return hashlib.sha256(np.ascontiguousarray(array, dtype="<f4").tobytes()).hexdigest()


class TimingObserver:
    """Collects timings, verifying each result against a serial oracle."""

    def __init__(self, rtol: float = 1e-6):
        self.rtol = rtol
        self.rows: list[TimingRow] = []
        self.violations: list[CorrectnessViolation] = []

    def record(
        self,
        scenario: str,
        workers: int,
        seconds: float,
        results: Sequence[np.ndarray],
        oracle: np.ndarray,
        require_identical: bool = False,
    ) -> bool:
        """Verify ``results`` against ``oracle`` and keep the timing if they agree.

        Args:
            results: One or more result buffers (one per rank for collectives)
            require_identical: Also require all results to be bit-identical

        Returns:
            True if the timing was recorded
        """
        violation = self._check(scenario, workers, results, oracle, require_identical)
        if violation is not None:
            self.violations.append(violation)
            logger.error("%s with %d workers: %s", scenario, workers, violation.message)
            return False
        self.rows.append(TimingRow(scenario, workers, seconds, checksum(oracle)))
        logger.info("%s with %d workers: %.6fs verified", scenario, workers, seconds)
        return True

    def build_report(self) -> TimingReport:
        return TimingReport(rows=list(self.rows), violations=list(self.violations))

    def write_csv(self, path: str | Path) -> TimingReport:
        """Write the verified rows.

        Raises:
            CorrectnessError: If any result failed verification; nothing is written
        """
        report = self.build_report()
        if not report.ok:
            raise CorrectnessError(report.summary + ": " + "; ".join(v.message for v in report.violations))
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_HEADER)
            for row in report.rows:
                writer.writerow([row.scenario, row.workers, f"{row.seconds:.6f}", row.checksum])
        return report

    def _check(
        self,
        scenario: str,
        workers: int,
        results: Sequence[np.ndarray],
        oracle: np.ndarray,
        require_identical: bool,
    ) -> CorrectnessViolation | None:
        if not results:
            return CorrectnessViolation(ViolationType.SHAPE_MISMATCH, scenario, workers, "no results")
        reference = np.asarray(oracle, dtype=np.float64)
        for i, result in enumerate(results):
            value = np.asarray(result, dtype=np.float64)
            if value.shape != reference.shape:
                return CorrectnessViolation(
                    ViolationType.SHAPE_MISMATCH, scenario, workers,
                    f"result {i} has shape {value.shape}, oracle {reference.shape}",
                )
            scale = max(float(np.max(np.abs(reference), initial=0.0)), np.finfo(np.float64).tiny)
            error = float(np.max(np.abs(value - reference), initial=0.0)) / scale
            if error > self.rtol:
                return CorrectnessViolation(
                    ViolationType.ORACLE_MISMATCH, scenario, workers,
                    f"result {i} differs from oracle by {error:.3e} relative",
                    {"relative_error": error},
                )
        if require_identical:
            first = np.ascontiguousarray(results[0]).tobytes()
            for i, result in enumerate(results[1:], start=1):
                if np.ascontiguousarray(result).tobytes() != first:
                    return CorrectnessViolation(
                        ViolationType.RANK_DISAGREEMENT, scenario, workers,
                        f"rank {i} result differs from rank 0",
                    )
        return None
