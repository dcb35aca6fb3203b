"""Distributed ptychographic reconstruction."""

from .kernels import (
    dm_step,
    error_metric,
    exit_wave,
    exit_waves,
    modulus_projection,
    overlap_projection,
    raar_step,
    simulate_intensity,
    update_object,
    update_probe,
)
from .params import PtychoState, ScanSet, SolverParams
from .simulate import coverage_mask, phase_aligned_correlation, simulate_scan
from .solver import ReconstructionResult, reconstruct

__all__ = [
    "PtychoState",
    "ReconstructionResult",
    "ScanSet",
    "SolverParams",
    "coverage_mask",
    "dm_step",
    "error_metric",
    "exit_wave",
    "exit_waves",
    "modulus_projection",
    "overlap_projection",
    "phase_aligned_correlation",
    "raar_step",
    "reconstruct",
    "simulate_intensity",
    "simulate_scan",
    "update_object",
    "update_probe",
]
