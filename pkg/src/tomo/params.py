"""ART parameters and the tilt-series container."""

from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from src.core.config import get_settings
from src.core.errors import ArgumentError, ConfigurationError


class ArtParams(BaseModel):
    """Kaczmarz sweep settings."""

    beta: float = Field(default=1.0, gt=0, lt=2)
    sweeps: int = Field(default=10, ge=1)
    row_order: Literal["sequential", "shuffled"] = "sequential"
    seed: int = 0
    nonneg: bool = False

    @classmethod
    def from_settings(cls, **overrides) -> "ArtParams":
        """Defaults from the ``tomo`` config section, then ``overrides``.

        Raises:
            ConfigurationError: If the combination is invalid
        """
        section = get_settings().tomo
        values = {"beta": section.beta, "sweeps": section.sweeps, "row_order": section.row_order}
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid ART parameters: {e}") from e


@dataclass
class TiltSeries:
    """Projections shaped (Nslice, Nray, Nproj) and their tilt angles in degrees."""

    data: np.ndarray
    angles: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        self.angles = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        if self.data.ndim != 3:
            raise ArgumentError(f"tilt series must be 3-D (Nslice, Nray, Nproj), got {self.data.shape}")
        if self.data.shape[2] != len(self.angles):
            raise ArgumentError(f"{self.data.shape[2]} projections but {len(self.angles)} angles")
        if len(self.angles) > 1 and np.any(np.diff(self.angles) <= 0):
            raise ArgumentError("tilt angles must be strictly increasing")
        if np.any(self.data < 0):
            raise ArgumentError(f"projections must be non-negative, minimum is {self.data.min():g}")

    @property
    def shape(self) -> tuple[int, int, int]:
        n_slice, n_ray, n_proj = self.data.shape
        return int(n_slice), int(n_ray), int(n_proj)

    def rhs(self, index: int) -> np.ndarray:
        """Right-hand side of one slice: the transposed, flattened sinogram (angle-major)."""
        return self.data[index].T.flatten()
