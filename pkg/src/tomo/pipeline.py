"""Volume reconstruction: slices block-partitioned over the engine."""

import logging
import time
from dataclasses import dataclass

import numpy as np

from src.core.errors import ArgumentError
from src.engine import EngineContext, TaskSpec

from .params import ArtParams, TiltSeries
from .system_matrix import SystemMatrix, cached_matrix

logger = logging.getLogger(__name__)

ART_TASK = "tomo.art"


def tilt_angles(size_z: int) -> list[float]:
    """Degrees -size_z+1, -size_z+3, ..., size_z-1."""
    return [float(a) for a in range(-size_z + 1, size_z, 2)]


def angle_range(start: float, stop: float, step: float) -> np.ndarray:
    """Half-open [start, stop) in ``step`` degree increments."""
    if step <= 0 or stop <= start:
        raise ArgumentError(f"bad angle range {start}:{stop}:{step}")
    return np.arange(start, stop, step, dtype=np.float64)


def simulate_projections(phantom: np.ndarray, system: SystemMatrix) -> TiltSeries:
    """b = A f per slice, reshaped to (Nray, Nproj) by inverting the sinogram flattening."""
    phantom = np.asarray(phantom, dtype=np.float64)
    if phantom.ndim == 2:
        phantom = phantom[None]
    n_slice = phantom.shape[0]
    if phantom.shape[1:] != (system.n_side, system.n_side):
        raise ArgumentError(f"phantom slices {phantom.shape[1:]} do not match a {system.n_side}-pixel grid")
    data = np.empty((n_slice, system.n_ray, system.n_proj))
    for s in range(n_slice):
        b = system.matrix @ phantom[s].reshape(-1)
        data[s] = b.reshape(system.n_proj, system.n_ray).T
    return TiltSeries(data, np.asarray(system.angles))


@dataclass
class VolumeResult:
    volume: np.ndarray
    seconds: float
    partitions: int
    workers: int


def reconstruct_volume(
    series: TiltSeries,
    params: ArtParams,
    partitions: int = 1,
    context: EngineContext | None = None,
    pixel_width: float = 1.0,
    ray_width: float = 1.0,
) -> VolumeResult:
    """ART per slice, slices split into ``partitions`` contiguous blocks.

    The output does not depend on the partition count.

    Raises:
        ArgumentError: If partitions is not in [1, Nslice]
    """
    n_slice, n_ray, _ = series.shape
    if not 1 <= partitions <= n_slice:
        raise ArgumentError(f"partitions must be in [1, {n_slice}], got {partitions}")

    owned = context is None
    context = context or EngineContext(workers=0)
    started = time.perf_counter()
    try:
        task = TaskSpec.build(
            ART_TASK,
            {
                "n_side": n_ray,
                "n_ray": n_ray,
                "pixel_width": pixel_width,
                "ray_width": ray_width,
                "angles": series.angles.tolist(),
                "params": params.model_dump(),
            },
        )
        items = [(s, series.rhs(s)) for s in range(n_slice)]
        results = context.parallelize(items, partitions).map_partitions_with_index(task).collect()
    finally:
        if owned:
            context.close()

    volume = np.empty((n_slice, n_ray, n_ray))
    for index, f in results:
        volume[index] = np.asarray(f).reshape(n_ray, n_ray)
    seconds = time.perf_counter() - started
    logger.info("reconstructed %d slices over %d partitions in %.3fs", n_slice, partitions, seconds)
    return VolumeResult(volume, seconds, partitions, context.workers)


def system_for(series: TiltSeries, pixel_width: float = 1.0, ray_width: float = 1.0) -> SystemMatrix:
    _, n_ray, _ = series.shape
    return cached_matrix(n_ray, pixel_width, series.angles, n_ray, ray_width)


def relative_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    norm = float(np.linalg.norm(truth))
    return float(np.linalg.norm(estimate - truth)) / norm if norm else float(np.linalg.norm(estimate))
