"""Tests for the ptychography kernels, solver and scan files."""

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.errors import ArgumentError, ConfigurationError, DivergenceError
from src.engine import EngineContext, TaskKind, TaskSpec
from src.ptycho import (
    PtychoState,
    ScanSet,
    SolverParams,
    coverage_mask,
    dm_step,
    error_metric,
    exit_waves,
    modulus_projection,
    overlap_projection,
    phase_aligned_correlation,
    raar_step,
    reconstruct,
    simulate_intensity,
    simulate_scan,
)
from src.ptycho.io import read_scan, write_scan
from src.ptycho.kernels import fft2, ifft2
from src.ptycho.solver import initial_state
from src.tasks.ptycho import RECONSTRUCT
from tests.helpers import local_group, raise_first

OBJECT = (24, 24)
PROBE = (8, 8)
POSITIONS = np.array([[r, c] for r in range(0, 17, 4) for c in range(0, 17, 4)])


def random_state(seed: int = 0) -> PtychoState:
    """Probe and object with amplitudes bounded away from zero."""
    rng = np.random.default_rng(seed)
    probe = rng.uniform(0.5, 1.5, PROBE) * np.exp(1j * rng.uniform(-np.pi, np.pi, PROBE))
    obj = rng.uniform(0.5, 1.5, OBJECT) * np.exp(1j * rng.uniform(-np.pi, np.pi, OBJECT))
    return PtychoState(probe, obj)


def random_waves(seed: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    shape = (len(POSITIONS), *PROBE)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def small_scan(seed: int = 0) -> ScanSet:
    return simulate_scan(object_shape=(48, 48), probe_shape=(16, 16), grid=4, jitter=1, seed=seed)


class TestTransforms:
    """Unitary DFT and the forward model."""

    def test_parseval(self):
        """The transform preserves energy."""
        psi = random_waves()
        assert np.sum(np.abs(fft2(psi)) ** 2) == pytest.approx(np.sum(np.abs(psi) ** 2), rel=1e-12)
        np.testing.assert_allclose(ifft2(fft2(psi)), psi, atol=1e-12)

    def test_intensity_energy(self):
        """Total simulated intensity equals the exit-wave energy."""
        psi = random_waves()
        assert simulate_intensity(psi).sum() == pytest.approx(np.sum(np.abs(psi) ** 2), rel=1e-12)

    def test_non_finite_wave(self):
        """Non-finite exit waves are refused."""
        psi = random_waves()
        psi[0, 0, 0] = np.nan
        with pytest.raises(ArgumentError):
            simulate_intensity(psi)

    def test_footprint_outside_object(self):
        """A position that pushes the probe past the object edge is an argument error."""
        state = random_state()
        with pytest.raises(ArgumentError):
            exit_waves(state.probe, state.object, np.array([[20, 0]]))


class TestProjections:
    """Modulus and overlap projections."""

    def test_modulus_projection_matches_intensity(self):
        """Projected waves reproduce the measured magnitudes and are idempotent."""
        psi = random_waves()
        intensity = simulate_intensity(random_waves(seed=5))
        projected = modulus_projection(psi, intensity)
        np.testing.assert_allclose(np.abs(fft2(projected)) ** 2, intensity, rtol=1e-9, atol=1e-9)
        np.testing.assert_allclose(modulus_projection(projected, intensity), projected, atol=1e-10)

    def test_modulus_projection_keeps_phase(self):
        """Fourier phases survive the projection."""
        psi = random_waves()
        projected = modulus_projection(psi, np.ones(psi.shape))
        spectrum, before = fft2(projected), fft2(psi)
        np.testing.assert_allclose(spectrum, before / np.abs(before), atol=1e-10)

    def test_modulus_projection_shape_mismatch(self):
        """Waves and intensities must agree in shape."""
        with pytest.raises(ArgumentError):
            modulus_projection(random_waves(), np.ones((1, *PROBE)))

    def test_overlap_projection_idempotent(self):
        """With the probe held fixed the overlap projection is idempotent."""
        state = random_state()
        once = overlap_projection(random_waves(), state, POSITIONS, update_probe_enabled=False)
        twice = overlap_projection(once, state, POSITIONS, update_probe_enabled=False)
        np.testing.assert_allclose(twice, once, atol=1e-10)

    def test_overlap_projection_factorizes(self):
        """The projected waves are exactly the exit waves of the refined state."""
        state = random_state()
        projected = overlap_projection(random_waves(), state, POSITIONS, inner_iters=2)
        np.testing.assert_allclose(projected, exit_waves(state.probe, state.object, POSITIONS))

    def test_inner_iters_floor(self):
        """At least one inner pass."""
        with pytest.raises(ArgumentError):
            overlap_projection(random_waves(), random_state(), POSITIONS, inner_iters=0)


class TestFixedPoints:
    """The true factorization is left unchanged by every step."""

    def setup_method(self):
        """Exact waves and intensities of a random state."""
        self.truth = random_state(3)
        self.psi = exit_waves(self.truth.probe, self.truth.object, POSITIONS)
        self.intensity = simulate_intensity(self.psi)

    def test_error_metric_zero_at_truth(self):
        """eps of the exact waves is zero."""
        assert error_metric(self.psi, self.truth, POSITIONS) == pytest.approx(0.0, abs=1e-20)

    def test_raar(self):
        """RAAR maps the true waves to themselves."""
        state = self.truth.copy()
        out = raar_step(self.psi, self.intensity, state, POSITIONS, beta=0.75)
        np.testing.assert_allclose(out, self.psi, atol=1e-9)

    def test_dm(self):
        """The difference map maps the true waves to themselves."""
        state = self.truth.copy()
        out = dm_step(self.psi, self.intensity, state, POSITIONS, 0.9, -1 / 0.9, 1 / 0.9)
        np.testing.assert_allclose(out, self.psi, atol=1e-9)


class TestSolverParams:
    """Parameter validation."""

    def test_defaults(self):
        """gamma defaults follow beta; each step issues 4 reductions per inner pass plus one."""
        params = SolverParams(beta=0.5, inner_iters=2)
        assert params.effective_gamma1 == -2.0
        assert params.effective_gamma2 == 2.0
        assert params.reductions_per_iteration == 9

    @pytest.mark.parametrize(
        "fields",
        [{"beta": 0}, {"beta": 1.5}, {"iterations": -1}, {"algorithm": "hio"}, {"gamma1": float("inf")}],
    )
    def test_invalid(self, fields):
        """Out-of-range values are rejected."""
        with pytest.raises(ValidationError):
            SolverParams(**fields)

    def test_from_settings_override(self):
        """Overrides win over the config section; None keeps the default."""
        params = SolverParams.from_settings(beta=0.6, iterations=None)
        assert params.beta == 0.6
        with pytest.raises(ConfigurationError):
            SolverParams.from_settings(beta=-1.0)


class TestScanSet:
    """Scan containers and their validation."""

    def test_partition_blocks(self):
        """Frames split into contiguous ceil(J/parts) blocks."""
        scan = ScanSet(np.zeros((10, 4, 4)), np.zeros((10, 2)), (8, 8))
        assert scan.partition(3) == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]
        assert scan.partition(1) == [list(range(10))]
        with pytest.raises(ArgumentError):
            scan.partition(0)

    def test_probe_outside_object(self):
        """Positions must keep the probe inside the object."""
        with pytest.raises(ArgumentError):
            ScanSet(np.zeros((1, 4, 4)), [[5, 0]], (8, 8))

    def test_negative_intensity(self):
        """Intensities are non-negative."""
        with pytest.raises(ArgumentError):
            ScanSet(-np.ones((1, 4, 4)), [[0, 0]], (8, 8))

    def test_simulation_is_deterministic(self):
        """The same seed gives the same scan; a different seed does not."""
        a, b, c = small_scan(5), small_scan(5), small_scan(6)
        np.testing.assert_array_equal(a.intensities, b.intensities)
        np.testing.assert_array_equal(a.positions, b.positions)
        assert not np.array_equal(a.object_true, c.object_true)
        assert a.num_frames == 16

    def test_round_trip(self, tmp_path):
        """Scan files reload with float32 intensities and complex64 truth."""
        scan = small_scan()
        loaded = read_scan(write_scan(tmp_path / "scan", scan))
        np.testing.assert_array_equal(loaded.intensities, scan.intensities.astype(np.float32))
        np.testing.assert_array_equal(loaded.positions, scan.positions)
        assert loaded.object_shape == scan.object_shape
        assert loaded.seed == scan.seed
        np.testing.assert_allclose(loaded.probe_true, scan.probe_true, rtol=1e-6, atol=1e-6)

    def test_missing_header(self, tmp_path):
        """A directory without a scan header cannot be read."""
        with pytest.raises(ArgumentError):
            read_scan(tmp_path)


class TestReconstruct:
    """Serial and distributed solver runs."""

    def test_zero_iterations(self):
        """Zero iterations returns the initialization and one eps value."""
        scan = small_scan()
        params = SolverParams(iterations=0)
        result = reconstruct(scan, params)
        assert result.iterations == 0
        assert len(result.epsilon) == 1
        start = initial_state(scan, params)
        np.testing.assert_array_equal(result.object, start.object)
        np.testing.assert_array_equal(result.probe, start.probe)

    @pytest.mark.parametrize("algorithm", ["raar", "dm"])
    def test_error_decreases(self, algorithm):
        """Noise-free data drives the error metric down."""
        result = reconstruct(small_scan(), SolverParams(algorithm=algorithm, beta=0.9, iterations=20))
        assert len(result.epsilon) == 21
        assert all(np.isfinite(result.epsilon))
        assert result.epsilon[-1] < result.epsilon[0]

    def test_divergence(self):
        """A non-finite error metric stops the run."""
        scan = small_scan()
        scan.intensities[0, 0, 0] = np.inf
        with pytest.raises(DivergenceError):
            reconstruct(scan, SolverParams(iterations=1))

    @pytest.mark.parametrize("ranks", [2, 3])
    def test_distributed_matches_serial(self, ranks):
        """Partial sums reduced over ranks give the serial result up to summation order."""
        scan = small_scan()
        params = SolverParams(iterations=5, object_noise=0.1, seed=9)
        serial = reconstruct(scan, params)
        results = raise_first(local_group(ranks, lambda comm: reconstruct(scan, params, comm)))
        for result in results:
            np.testing.assert_allclose(result.epsilon, serial.epsilon, rtol=1e-8)
            np.testing.assert_allclose(result.object, serial.object, rtol=1e-7, atol=1e-9)
            np.testing.assert_array_equal(result.object, results[0].object)

    def test_collective_task(self, tmp_path):
        """The engine task reconstructs from a shared scan directory."""
        directory = write_scan(tmp_path / "scan", small_scan())
        scan = read_scan(directory)
        params = SolverParams(iterations=3)
        task = TaskSpec.build(
            RECONSTRUCT, {"scan": str(directory), "params": params.model_dump()}, kind=TaskKind.COLLECTIVE
        )
        with EngineContext(workers=0) as context:
            (first,) = context.parallelize(scan.partition(2), 2).map_partitions_with_index(task).collect()
        serial = reconstruct(scan, params)
        assert first["rank"] == 0
        np.testing.assert_allclose(first["epsilon"], serial.epsilon, rtol=1e-8)

    def test_correlation_metric(self):
        """A global phase factor does not change the correlation."""
        scan = small_scan()
        mask = coverage_mask(scan.probe_true, scan.positions, scan.object_shape)
        rotated = scan.object_true * np.exp(1j * 0.7)
        assert phase_aligned_correlation(rotated, scan.object_true, mask) == pytest.approx(1.0)
