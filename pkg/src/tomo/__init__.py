"""ART tomographic reconstruction on a parallel-beam geometry."""

from .art import art_slice
from .params import ArtParams, TiltSeries
from .phantom import ellipse_phantom
from .pipeline import (
    VolumeResult,
    angle_range,
    reconstruct_volume,
    relative_error,
    simulate_projections,
    system_for,
    tilt_angles,
)
from .system_matrix import SystemMatrix, cached_matrix, parallel_ray_matrix, row_inner_products

__all__ = [
    "ArtParams",
    "SystemMatrix",
    "TiltSeries",
    "VolumeResult",
    "angle_range",
    "art_slice",
    "cached_matrix",
    "ellipse_phantom",
    "parallel_ray_matrix",
    "reconstruct_volume",
    "relative_error",
    "row_inner_products",
    "simulate_projections",
    "system_for",
    "tilt_angles",
]
