"""Ptychographic forward model, projections and iteration steps.

Arrays are complex128. Exit-wave stacks have shape (frames, h, w); the
object is (H, W); ``positions[j]`` is the object-coordinate corner of frame j.
Every function taking ``comm`` sums its partial grids across ranks with a
single float64 allreduce, so the serial and distributed results differ only
by summation order.
"""

import numpy as np

from src.collectives import Communicator
from src.core.errors import ArgumentError

from .params import PtychoState


def fft2(field: np.ndarray) -> np.ndarray:
    """Unitary 2-D DFT over the last two axes."""
    return np.fft.fft2(field, norm="ortho")


def ifft2(field: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(field, norm="ortho")


def _footprint(position, probe_shape, object_shape) -> tuple[slice, slice]:
    row, col = int(position[0]), int(position[1])
    h, w = probe_shape
    if row < 0 or col < 0 or row + h > object_shape[0] or col + w > object_shape[1]:
        raise ArgumentError(f"probe footprint at ({row}, {col}) leaves the {object_shape} object")
    return slice(row, row + h), slice(col, col + w)


def exit_wave(probe: np.ndarray, obj: np.ndarray, position) -> np.ndarray:
    """psi_j(r) = P(r - r_j) O(r) over the probe footprint."""
    rows, cols = _footprint(position, probe.shape, obj.shape)
    return probe * obj[rows, cols]


def exit_waves(probe: np.ndarray, obj: np.ndarray, positions: np.ndarray) -> np.ndarray:
    waves = np.empty((len(positions), *probe.shape), dtype=np.complex128)
    for j, position in enumerate(positions):
        waves[j] = exit_wave(probe, obj, position)
    return waves


def simulate_intensity(psi: np.ndarray) -> np.ndarray:
    """I = |F psi|^2 under the unitary transform."""
    if not np.all(np.isfinite(psi)):
        raise ArgumentError("exit wave holds non-finite values")
    return np.abs(fft2(psi)) ** 2


def modulus_projection(psi: np.ndarray, intensity: np.ndarray) -> np.ndarray:
    """Replace Fourier magnitudes by sqrt(I), keeping phases; zero magnitudes take phase 1."""
    if psi.shape != intensity.shape:
        raise ArgumentError(f"shape mismatch: psi {psi.shape} vs intensity {intensity.shape}")
    spectrum = fft2(psi)
    magnitude = np.abs(spectrum)
    phase = np.ones_like(spectrum)
    nonzero = magnitude > 0
    phase[nonzero] = spectrum[nonzero] / magnitude[nonzero]
    return ifft2(np.sqrt(intensity) * phase)


def _allreduce_parts(comm: Communicator | None, *parts: np.ndarray) -> list[np.ndarray]:
    """Sum float64 grids across ranks in one call; returns them split back."""
    if comm is None or comm.size == 1:
        return list(parts)
    flat = np.concatenate([p.reshape(-1) for p in parts])
    total = comm.allreduce(flat)
    out, offset = [], 0
    for p in parts:
        out.append(total[offset:offset + p.size].reshape(p.shape))
        offset += p.size
    return out


def _floored(den: np.ndarray, floor: float) -> np.ndarray:
    peak = float(den.max(initial=0.0))
    return np.maximum(den, floor * peak if peak > 0 else floor)


def update_probe(
    psi: np.ndarray,
    obj: np.ndarray,
    positions: np.ndarray,
    floor: float = 1e-8,
    comm: Communicator | None = None,
) -> np.ndarray:
    """P = sum_j psi_j O*(r + r_j) / max(sum_j |O(r + r_j)|^2, floor)."""
    shape = psi.shape[1:]
    num = np.zeros(shape, dtype=np.complex128)
    den = np.zeros(shape, dtype=np.float64)
    for j, position in enumerate(positions):
        patch = obj[_footprint(position, shape, obj.shape)]
        num += psi[j] * np.conj(patch)
        den += np.abs(patch) ** 2
    real, imag, den = _allreduce_parts(comm, num.real.copy(), num.imag.copy(), den)
    return (real + 1j * imag) / _floored(den, floor)


def update_object(
    psi: np.ndarray,
    probe: np.ndarray,
    positions: np.ndarray,
    object_shape: tuple[int, int],
    floor: float = 1e-8,
    comm: Communicator | None = None,
) -> np.ndarray:
    """O = sum_j psi_j P*(r - r_j) / max(sum_j |P(r - r_j)|^2, floor), footprints scattered."""
    num = np.zeros(object_shape, dtype=np.complex128)
    den = np.zeros(object_shape, dtype=np.float64)
    weight = np.abs(probe) ** 2
    conj_probe = np.conj(probe)
    for j, position in enumerate(positions):
        footprint = _footprint(position, probe.shape, object_shape)
        num[footprint] += psi[j] * conj_probe
        den[footprint] += weight
    real, imag, den = _allreduce_parts(comm, num.real.copy(), num.imag.copy(), den)
    return (real + 1j * imag) / _floored(den, floor)


def overlap_projection(
    psi: np.ndarray,
    state: PtychoState,
    positions: np.ndarray,
    floor: float = 1e-8,
    comm: Communicator | None = None,
    inner_iters: int = 1,
    update_probe_enabled: bool = True,
) -> np.ndarray:
    """Refine ``state`` against ``psi`` in place, then return its exit waves."""
    if inner_iters < 1:
        raise ArgumentError(f"inner_iters must be >= 1, got {inner_iters}")
    for _ in range(inner_iters):
        if update_probe_enabled:
            state.probe = update_probe(psi, state.object, positions, floor, comm)
        state.object = update_object(psi, state.probe, positions, state.object.shape, floor, comm)
    return exit_waves(state.probe, state.object, positions)


def error_metric(
    psi: np.ndarray,
    state: PtychoState,
    positions: np.ndarray,
    comm: Communicator | None = None,
) -> float:
    """eps = sum_j sum_r |psi_j - P O|^2, summed across ranks."""
    local = 0.0
    for j, position in enumerate(positions):
        local += float(np.sum(np.abs(psi[j] - exit_wave(state.probe, state.object, position)) ** 2))
    (total,) = _allreduce_parts(comm, np.array([local]))
    return float(total[0])


def raar_step(
    psi: np.ndarray,
    intensity: np.ndarray,
    state: PtychoState,
    positions: np.ndarray,
    beta: float,
    floor: float = 1e-8,
    comm: Communicator | None = None,
    inner_iters: int = 1,
    update_probe_enabled: bool = True,
) -> np.ndarray:
    """psi' = 2b pi2(pi1 psi) + (1 - 2b) pi1 psi + b (psi - pi2 psi).

    The state ends refined against pi1 psi.
    """
    overlap = overlap_projection(psi, state, positions, floor, comm, inner_iters, update_probe_enabled)
    modulus = modulus_projection(psi, intensity)
    both = overlap_projection(modulus, state, positions, floor, comm, inner_iters, update_probe_enabled)
    return 2 * beta * both + (1 - 2 * beta) * modulus + beta * (psi - overlap)


def dm_step(
    psi: np.ndarray,
    intensity: np.ndarray,
    state: PtychoState,
    positions: np.ndarray,
    beta: float,
    gamma1: float,
    gamma2: float,
    floor: float = 1e-8,
    comm: Communicator | None = None,
    inner_iters: int = 1,
    update_probe_enabled: bool = True,
) -> np.ndarray:
    """psi' = psi + b [pi1(f2 psi) - pi2(f1 psi)], f_i = (1 + g_i) pi_i - g_i."""
    overlap = overlap_projection(psi, state, positions, floor, comm, inner_iters, update_probe_enabled)
    f2 = (1 + gamma2) * overlap - gamma2 * psi
    f1 = (1 + gamma1) * modulus_projection(psi, intensity) - gamma1 * psi
    return psi + beta * (
        modulus_projection(f2, intensity)
        - overlap_projection(f1, state, positions, floor, comm, inner_iters, update_probe_enabled)
    )
