"""Solver parameters and the scan/state containers."""

from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from src.core.config import get_settings
from src.core.errors import ArgumentError, ConfigurationError


class SolverParams(BaseModel):
    """Parameters of a ptychographic reconstruction.

    ``gamma1``/``gamma2`` apply to the difference map only and default to
    -1/beta and 1/beta. Zero iterations returns the initialization.
    """

    algorithm: Literal["raar", "dm"] = "raar"
    beta: float = Field(default=0.9, gt=0, le=1)
    gamma1: float | None = None
    gamma2: float | None = None
    iterations: int = Field(default=100, ge=0)
    denominator_floor: float = Field(default=1e-8, gt=0)
    inner_iters: int = Field(default=1, ge=1)
    probe_update_start: int = Field(default=0, ge=0)
    object_noise: float = Field(default=0.0, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _finite(self) -> "SolverParams":
        for name in ("gamma1", "gamma2"):
            value = getattr(self, name)
            if value is not None and not np.isfinite(value):
                raise ValueError(f"{name} must be finite")
        return self

    @property
    def effective_gamma1(self) -> float:
        return -1.0 / self.beta if self.gamma1 is None else self.gamma1

    @property
    def effective_gamma2(self) -> float:
        return 1.0 / self.beta if self.gamma2 is None else self.gamma2

    @property
    def reductions_per_iteration(self) -> int:
        """Allreduce calls per step: two overlap projections of 2 per inner pass, plus the error."""
        return 4 * self.inner_iters + 1

    @classmethod
    def from_settings(cls, **overrides) -> "SolverParams":
        """Defaults from the ``ptycho`` config section, then ``overrides``.

        Raises:
            ConfigurationError: If the combination is invalid
        """
        section = get_settings().ptycho
        values = {
            "algorithm": section.algorithm,
            "beta": section.beta,
            "iterations": section.iterations,
            "denominator_floor": section.denominator_floor,
            "inner_iters": section.inner_iters,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid solver parameters: {e}") from e


@dataclass
class ScanSet:
    """Detector frames, their scan positions and (for simulations) the truth.

    ``positions[j]`` is the (row, col) of the probe's corner in object
    coordinates.
    """

    intensities: np.ndarray
    positions: np.ndarray
    object_shape: tuple[int, int]
    probe_true: np.ndarray | None = None
    object_true: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        self.positions = np.asarray(self.positions, dtype=np.int64).reshape(-1, 2)
        self.object_shape = (int(self.object_shape[0]), int(self.object_shape[1]))
        if self.intensities.ndim != 3 or len(self.intensities) != len(self.positions):
            raise ArgumentError("intensities must be (frames, h, w) with one position per frame")
        if np.any(self.intensities < 0):
            raise ArgumentError("intensities must be non-negative")
        h, w = self.frame_shape
        if h > self.object_shape[0] or w > self.object_shape[1]:
            raise ArgumentError("probe dimensions exceed the object")
        rows, cols = self.positions[:, 0], self.positions[:, 1]
        if np.any(rows < 0) or np.any(cols < 0) or np.any(rows + h > self.object_shape[0]) or np.any(cols + w > self.object_shape[1]):
            raise ArgumentError("a scan position places the probe outside the object")

    @property
    def frame_shape(self) -> tuple[int, int]:
        return int(self.intensities.shape[1]), int(self.intensities.shape[2])

    @property
    def num_frames(self) -> int:
        return len(self.positions)

    def subset(self, indices: Sequence[int]) -> "ScanSet":
        idx = np.asarray(indices, dtype=np.int64)
        return replace(self, intensities=self.intensities[idx], positions=self.positions[idx])

    def partition(self, parts: int) -> list[list[int]]:
        """Frame indices per rank: contiguous blocks of ceil(J/parts)."""
        if parts < 1:
            raise ArgumentError(f"parts must be >= 1, got {parts}")
        block = -(-self.num_frames // parts)
        return [list(range(i * block, min((i + 1) * block, self.num_frames))) for i in range(parts)]


@dataclass
class PtychoState:
    """Current probe and object estimates."""

    probe: np.ndarray
    object: np.ndarray

    def copy(self) -> "PtychoState":
        return PtychoState(self.probe.copy(), self.object.copy())
