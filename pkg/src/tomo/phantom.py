"""Piecewise-constant test phantoms."""

import numpy as np

from src.core.errors import ArgumentError

# (center y, center x, semi-axis y, semi-axis x, value) in units of the half-width
ELLIPSES = (
    (0.0, 0.0, 0.80, 0.65, 1.0),
    (-0.25, -0.20, 0.22, 0.15, 0.5),
    (0.25, 0.22, 0.18, 0.24, 2.0),
    (0.05, -0.30, 0.10, 0.10, 1.5),
    (-0.35, 0.25, 0.12, 0.08, 0.25),
)


def ellipse_phantom(n: int, n_slices: int = 1) -> np.ndarray:
    """(n_slices, n, n) volume of nested ellipses; the small features drift with the slice index."""
    if n < 2 or n_slices < 1:
        raise ArgumentError("phantom needs n >= 2 and at least one slice")
    coords = (np.arange(n) - (n - 1) / 2.0) / (n / 2.0)
    y, x = np.meshgrid(coords, coords, indexing="ij")
    volume = np.zeros((n_slices, n, n))
    for s in range(n_slices):
        drift = 0.1 * (s / max(n_slices - 1, 1) - 0.5)
        for i, (cy, cx, ay, ax, value) in enumerate(ELLIPSES):
            shift = drift if i else 0.0
            inside = ((y - cy - shift) / ay) ** 2 + ((x - cx) / ax) ** 2 <= 1.0
            volume[s][inside] = value
    return volume
