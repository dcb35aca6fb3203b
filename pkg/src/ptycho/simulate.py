"""Synthetic scans: a Gaussian probe over a disk phantom on a jittered grid.

Geometry comes from integer draws of a seeded generator, so a seed fixes the
scan byte for byte.
"""

import logging

import numpy as np

from src.core.errors import ArgumentError

from . import kernels
from .params import ScanSet
from .solver import box_blur

logger = logging.getLogger(__name__)

PHASE_LEVELS = (-2.4, -1.6, -0.9, -0.3, 0.5, 1.1, 1.7, 2.3)
AMPLITUDE_LEVELS = (0.7, 0.8, 0.9, 1.0)


def gaussian_probe(shape: tuple[int, int], sigma: float | None = None, curvature: float = 0.02) -> np.ndarray:
    """Gaussian amplitude (sigma = width / 5 by default) with a quadratic phase."""
    h, w = shape
    sigma = w / 5.0 if sigma is None else sigma
    y, x = np.mgrid[0:h, 0:w]
    r2 = (y - (h - 1) / 2.0) ** 2 + (x - (w - 1) / 2.0) ** 2
    return np.exp(-r2 / (2 * sigma**2)) * np.exp(1j * curvature * r2)


def disk_object(shape: tuple[int, int], seed: int, disks: int = 24) -> np.ndarray:
    """Overlapping disks of tabulated phase and amplitude, box-blurred."""
    h, w = shape
    rng = np.random.default_rng(seed)
    phase = np.zeros(shape)
    amplitude = np.ones(shape)
    y, x = np.mgrid[0:h, 0:w]
    max_radius = max(2, min(h, w) // 8)
    for _ in range(disks):
        cy, cx = int(rng.integers(0, h)), int(rng.integers(0, w))
        radius = int(rng.integers(2, max_radius + 1))
        inside = (y - cy) ** 2 + (x - cx) ** 2 <= radius**2
        phase[inside] = PHASE_LEVELS[int(rng.integers(0, len(PHASE_LEVELS)))]
        amplitude[inside] = AMPLITUDE_LEVELS[int(rng.integers(0, len(AMPLITUDE_LEVELS)))]
    return box_blur(amplitude) * np.exp(1j * box_blur(phase))


def scan_positions(
    object_shape: tuple[int, int],
    probe_shape: tuple[int, int],
    grid: int = 8,
    step: int | None = None,
    jitter: int = 2,
    seed: int = 0,
) -> np.ndarray:
    """Centered grid of probe corners with seeded integer jitter, clipped inside the object.

    ``step`` defaults to half the probe width, reduced if the grid would not fit.
    """
    if grid < 1:
        raise ArgumentError(f"grid must be >= 1, got {grid}")
    span = [o - p for o, p in zip(object_shape, probe_shape)]
    if min(span) < 0:
        raise ArgumentError("probe larger than object")
    if step is None:
        fit = min(span) // (grid - 1) if grid > 1 else 0
        step = min(probe_shape[1] // 2, fit) if grid > 1 else 0
    rng = np.random.default_rng(seed + 1)
    base = [(span[k] - step * (grid - 1)) // 2 for k in range(2)]
    positions = []
    for axis_i in range(grid):
        for axis_j in range(grid):
            corner = np.array([base[0] + step * axis_i, base[1] + step * axis_j])
            if jitter:
                corner = corner + rng.integers(-jitter, jitter + 1, size=2)
            positions.append(np.clip(corner, 0, span))
    return np.array(positions, dtype=np.int64)


def simulate_scan(
    object_shape: tuple[int, int] = (128, 128),
    probe_shape: tuple[int, int] = (32, 32),
    grid: int = 8,
    step: int | None = None,
    jitter: int = 2,
    seed: int = 0,
) -> ScanSet:
    """Simulate noise-free frames I_j = |F(P O_j)|^2 with the truth attached."""
    probe = gaussian_probe(probe_shape)
    obj = disk_object(object_shape, seed)
    positions = scan_positions(object_shape, probe_shape, grid, step, jitter, seed)
    intensities = kernels.simulate_intensity(kernels.exit_waves(probe, obj, positions))
    logger.info("simulated %d frames of %s over a %s object (seed %d)", len(positions), probe_shape, object_shape, seed)
    return ScanSet(intensities, positions, object_shape, probe_true=probe, object_true=obj, seed=seed)


def coverage_mask(probe: np.ndarray, positions: np.ndarray, object_shape: tuple[int, int], threshold: float = 0.5) -> np.ndarray:
    """Pixels whose summed illumination reaches ``threshold`` of the maximum."""
    illumination = np.zeros(object_shape)
    weight = np.abs(probe) ** 2
    h, w = probe.shape
    for row, col in positions:
        illumination[row:row + h, col:col + w] += weight
    return illumination >= threshold * illumination.max()


def phase_aligned_correlation(estimate: np.ndarray, truth: np.ndarray, mask: np.ndarray | None = None) -> float:
    """|<O, O_true>| / (|O| |O_true|) over ``mask``; invariant to a global phase and scale."""
    if mask is not None:
        estimate, truth = estimate[mask], truth[mask]
    norm = np.linalg.norm(estimate) * np.linalg.norm(truth)
    if norm == 0:
        return 0.0
    return float(np.abs(np.vdot(truth, estimate)) / norm)


def align_global_phase(estimate: np.ndarray, truth: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Rotate ``estimate`` by the global phase that best matches ``truth``."""
    region = mask if mask is not None else np.ones(truth.shape, dtype=bool)
    inner = np.vdot(estimate[region], truth[region])
    return estimate * (inner / abs(inner) if inner != 0 else 1.0)
