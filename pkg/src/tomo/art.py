"""Algebraic reconstruction technique (row-action Kaczmarz sweeps)."""

import numpy as np

from src.core.errors import ArgumentError, DivergenceError

from .params import ArtParams
from .system_matrix import SystemMatrix


def art_slice(
    system: SystemMatrix,
    b: np.ndarray,
    params: ArtParams,
    f0: np.ndarray | None = None,
) -> np.ndarray:
    """Run ``params.sweeps`` Kaczmarz sweeps for one slice.

    Each visited row j projects f onto its hyperplane with relaxation beta:
    f += beta * (b_j - <a_j, f>) / |a_j|^2 * a_j. Rows with zero norm are
    skipped. A shuffled order draws a new permutation per sweep from a
    generator seeded once per call.

    Raises:
        ArgumentError: On inconsistent shapes
        DivergenceError: If an update becomes non-finite
    """
    n_rows, n_cols = system.shape
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if b.size != n_rows:
        raise ArgumentError(f"b has {b.size} entries, matrix has {n_rows} rows")
    f = np.zeros(n_cols) if f0 is None else np.array(f0, dtype=np.float64).reshape(-1)
    if f.size != n_cols:
        raise ArgumentError(f"f0 has {f.size} entries, matrix has {n_cols} columns")

    indptr, indices, data = system.matrix.indptr, system.matrix.indices, system.matrix.data
    norms = system.row_inner_products
    rows = np.flatnonzero(norms > 0)
    rng = np.random.default_rng(params.seed) if params.row_order == "shuffled" else None
    beta = params.beta

    for sweep in range(1, params.sweeps + 1):
        order = rows if rng is None else rng.permutation(rows)
        for j in order:
            lo, hi = indptr[j], indptr[j + 1]
            cols, weights = indices[lo:hi], data[lo:hi]
            step = (b[j] - weights @ f[cols]) / norms[j]
            if not np.isfinite(step):
                raise DivergenceError(f"non-finite update in sweep {sweep} at row {j}")
            f[cols] += beta * step * weights
        if params.nonneg:
            np.maximum(f, 0.0, out=f)
    return f
