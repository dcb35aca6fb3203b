"""Iterative ptychographic reconstruction (RAAR or difference map)."""

import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from src.collectives import Communicator
from src.core.errors import DivergenceError

from . import kernels
from .params import PtychoState, ScanSet, SolverParams

logger = logging.getLogger(__name__)

BLUR_WIDTH = 3


@dataclass
class ReconstructionResult:
    probe: np.ndarray
    object: np.ndarray
    epsilon: list[float]
    seconds: float

    @property
    def iterations(self) -> int:
        return len(self.epsilon) - 1


def box_blur(field: np.ndarray, width: int = BLUR_WIDTH) -> np.ndarray:
    """Box filter applied to the real and imaginary parts."""
    if np.iscomplexobj(field):
        return uniform_filter(field.real, width, mode="nearest") + 1j * uniform_filter(field.imag, width, mode="nearest")
    return uniform_filter(field, width, mode="nearest")


def disk_probe(shape: tuple[int, int]) -> np.ndarray:
    """Centered disk of diameter half the probe width, amplitude 1."""
    h, w = shape
    y, x = np.mgrid[0:h, 0:w]
    radius = w / 4.0
    inside = (y - (h - 1) / 2.0) ** 2 + (x - (w - 1) / 2.0) ** 2 <= radius**2
    return inside.astype(np.complex128)


def initial_state(
    scan: ScanSet,
    params: SolverParams,
    comm: Communicator | None = None,
) -> PtychoState:
    """Blurred known probe (else a disk) and a unit object with optional phase noise.

    The noise is drawn on rank 0 and broadcast so every rank starts from the
    same object.
    """
    if scan.probe_true is not None:
        probe = box_blur(np.asarray(scan.probe_true, dtype=np.complex128))
    else:
        probe = disk_probe(scan.frame_shape)

    obj = np.ones(scan.object_shape, dtype=np.complex128)
    if params.object_noise > 0:
        phase = None
        if comm is None or comm.rank == 0:
            rng = np.random.default_rng(params.seed)
            phase = params.object_noise * rng.standard_normal(scan.object_shape)
        if comm is not None and comm.size > 1:
            phase = comm.broadcast(0, phase).reshape(scan.object_shape)
        obj = obj * np.exp(1j * phase)
    return PtychoState(probe=probe, object=obj)


def reconstruct(
    scan: ScanSet,
    params: SolverParams,
    comm: Communicator | None = None,
    frames: list[int] | None = None,
) -> ReconstructionResult:
    """Run ``params.iterations`` steps over this rank's frames.

    Args:
        scan: The full scan set; ``frames`` selects this rank's subset
        comm: Communicator for a distributed run; partial sums are allreduced
        frames: Frame indices owned by this rank; defaults to the contiguous
            block for ``comm.rank`` (or all frames without a communicator)

    Returns:
        Final probe and object plus eps for iterations 0..n, where eps[n] is the
        distance between the modulus-consistent waves and the current
        overlap factorization

    Raises:
        DivergenceError: If eps becomes non-finite
    """
    started = time.perf_counter()
    if frames is None:
        frames = scan.partition(comm.size)[comm.rank] if comm is not None else list(range(scan.num_frames))
    local = scan.subset(frames)
    positions, intensity = local.positions, local.intensities
    floor, inner = params.denominator_floor, params.inner_iters

    state = initial_state(scan, params, comm)
    psi = kernels.exit_waves(state.probe, state.object, positions)
    history = [_epsilon(psi, intensity, state, positions, comm, 0)]
    logger.info(
        "%s: %d iterations over %d of %d frames, beta=%.3f, eps0=%.6e",
        params.algorithm, params.iterations, local.num_frames, scan.num_frames, params.beta, history[0],
    )

    for n in range(1, params.iterations + 1):
        probe_enabled = n > params.probe_update_start
        if params.algorithm == "raar":
            psi = kernels.raar_step(psi, intensity, state, positions, params.beta, floor, comm, inner, probe_enabled)
        else:
            psi = kernels.dm_step(
                psi, intensity, state, positions, params.beta,
                params.effective_gamma1, params.effective_gamma2, floor, comm, inner, probe_enabled,
            )
        history.append(_epsilon(psi, intensity, state, positions, comm, n))
        if n % 10 == 0 or n == params.iterations:
            logger.info("iteration %d: eps=%.6e", n, history[-1])

    return ReconstructionResult(state.probe, state.object, history, time.perf_counter() - started)


def _epsilon(psi, intensity, state, positions, comm, iteration: int) -> float:
    value = kernels.error_metric(kernels.modulus_projection(psi, intensity), state, positions, comm)
    if not np.isfinite(value):
        raise DivergenceError(f"error metric is not finite at iteration {iteration}")
    return value
