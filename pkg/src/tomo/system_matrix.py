"""Parallel-beam system matrix by Siddon ray traversal.

Geometry: an Nside x Nside grid of square pixels centered at the origin;
pixel (iy, ix) is column iy * Nside + ix. Angle 0 means rays parallel to the
x-axis, angles grow counter-clockwise. Detector bin k lies at offset
(k - (Nray - 1) / 2) * rayWidth along the normal (-sin, cos). Rows are
angle-major: row = angle_index * Nray + k.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse

from src.core.errors import ArgumentError

logger = logging.getLogger(__name__)

_SNAP = 1e-12


@dataclass(frozen=True)
class SystemMatrix:
    """CSR system matrix with cached exact row inner products."""

    matrix: sparse.csr_matrix
    row_inner_products: np.ndarray
    n_side: int
    n_ray: int
    n_proj: int
    angles: tuple[float, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @classmethod
    def from_matrix(cls, matrix) -> "SystemMatrix":
        """Wrap an arbitrary sparse or dense matrix (one projection of all rows)."""
        csr = sparse.csr_matrix(matrix, dtype=np.float64)
        side = int(round(np.sqrt(csr.shape[1])))
        return cls(csr, row_inner_products(csr), side, csr.shape[0], 1, (0.0,))


def _ray_segments(origin: np.ndarray, direction: np.ndarray, edges: np.ndarray, pixel_width: float):
    """(pixel index pairs, lengths) crossed by the line origin + t * direction."""
    lo, hi = edges[0], edges[-1]
    t_enter, t_exit = -np.inf, np.inf
    crossings = []
    for axis in range(2):
        d, p = direction[axis], origin[axis]
        if d == 0.0:
            if not lo <= p < hi:
                return None
            continue
        t = (edges - p) / d
        t_enter = max(t_enter, min(t[0], t[-1]))
        t_exit = min(t_exit, max(t[0], t[-1]))
        crossings.append(t)
    if not t_exit > t_enter:
        return None

    ts = np.concatenate([[t_enter, t_exit], *crossings])
    ts = np.unique(ts[(ts >= t_enter) & (ts <= t_exit)])
    lengths = np.diff(ts)
    keep = lengths > _SNAP
    mids = (ts[:-1] + ts[1:])[keep] / 2.0
    lengths = lengths[keep]
    n = len(edges) - 1
    ix = np.clip(np.floor((origin[0] + mids * direction[0] - lo) / pixel_width).astype(np.int64), 0, n - 1)
    iy = np.clip(np.floor((origin[1] + mids * direction[1] - lo) / pixel_width).astype(np.int64), 0, n - 1)
    return iy * n + ix, lengths


def parallel_ray_matrix(
    n_side: int,
    pixel_width: float,
    angles: Sequence[float],
    n_ray: int,
    ray_width: float,
) -> SystemMatrix:
    """Build the (Nray * Nproj) x Nside^2 intersection-length matrix.

    Entries are center-line intersection lengths scaled by ``ray_width``.

    Raises:
        ArgumentError: On non-positive sizes or widths
    """
    if n_side < 1 or n_ray < 1 or pixel_width <= 0 or ray_width <= 0:
        raise ArgumentError("grid size, ray count and widths must be positive")
    angles = np.asarray(angles, dtype=np.float64).reshape(-1)
    if angles.size == 0:
        raise ArgumentError("at least one angle is required")

    edges = (np.arange(n_side + 1) - n_side / 2.0) * pixel_width
    offsets = (np.arange(n_ray) - (n_ray - 1) / 2.0) * ray_width
    indptr = [0]
    indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for angle in np.deg2rad(angles):
        direction = np.array([np.cos(angle), np.sin(angle)])
        direction[np.abs(direction) < _SNAP] = 0.0
        normal = np.array([-direction[1], direction[0]])
        for offset in offsets:
            hit = _ray_segments(offset * normal, direction, edges, pixel_width)
            if hit is not None:
                cols, lengths = hit
                indices.append(cols)
                data.append(lengths * ray_width)
                indptr.append(indptr[-1] + len(cols))
            else:
                indptr.append(indptr[-1])

    n_rows = n_ray * angles.size
    matrix = sparse.csr_matrix(
        (
            np.concatenate(data) if data else np.zeros(0),
            np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
            np.asarray(indptr, dtype=np.int64),
        ),
        shape=(n_rows, n_side * n_side),
    )
    matrix.sum_duplicates()
    logger.debug("system matrix %dx%d with %d nonzeros", n_rows, n_side * n_side, matrix.nnz)
    return SystemMatrix(
        matrix, row_inner_products(matrix), n_side, n_ray, angles.size, tuple(float(a) for a in angles)
    )


def row_inner_products(matrix: sparse.csr_matrix) -> np.ndarray:
    """Exact sum of squared weights per row; empty rows give 0."""
    return np.asarray(matrix.multiply(matrix).sum(axis=1), dtype=np.float64).reshape(-1)


@lru_cache(maxsize=8)
def _cached(n_side: int, pixel_width: float, angles: tuple[float, ...], n_ray: int, ray_width: float) -> SystemMatrix:
    return parallel_ray_matrix(n_side, pixel_width, angles, n_ray, ray_width)


def cached_matrix(
    n_side: int,
    pixel_width: float,
    angles: Sequence[float],
    n_ray: int,
    ray_width: float,
) -> SystemMatrix:
    """Per-process cache keyed by geometry."""
    return _cached(n_side, float(pixel_width), tuple(float(a) for a in angles), n_ray, float(ray_width))
