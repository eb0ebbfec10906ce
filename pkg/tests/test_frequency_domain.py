import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from kvbeam.discretization import GeneratorSystem, assemble_generator, build_mesh
from kvbeam.exceptions import CapabilityError, ConfigurationError, FitError, OnSpectrumError
from kvbeam.frequency_domain import (
    ResolventSweep,
    SpectrumReport,
    _sigma_min,
    boundedness_certificate,
    default_points,
    fit_resolvent_exponent,
    log_grid,
    resolvent_norm,
    resolvent_sweep,
    spectrum,
)
from kvbeam.model import BeamParameters, DampingConfiguration


def oscillator_system(freqs, rates):
    """Identity mass and gram; 2x2 blocks with eigenvalues ``-rate +- i freq``."""
    blocks = [np.array([[-d, w], [-w, -d]]) for w, d in zip(freqs, rates)]
    G = sparse.csr_matrix(sparse.block_diag(blocks))
    eye = sparse.identity(2 * len(freqs), format="csr")
    return GeneratorSystem(gram=eye, lhs=eye, rhs=G)


class TestSpectrum:
    def test_undamped_is_imaginary(self, small_systems):
        rep = spectrum(small_systems["none"])
        assert np.max(np.abs(rep.eigenvalues.real)) <= 1e-9 * rep.spectral_radius

    @pytest.mark.parametrize("side", ["shear", "bending"])
    def test_damped_is_stable_and_conjugate_closed(self, small_systems, side):
        rep = spectrum(small_systems[side])
        assert rep.spectral_abscissa < 0
        assert rep.imaginary_axis_clearance > 0
        assert rep.conjugate_closed()
        assert rep.eigenvalues.size == small_systems[side].dim

    @settings(max_examples=10, deadline=None)
    @given(st.floats(0.1, 10), st.floats(0.0, 0.95), st.sampled_from(["shear", "bending"]))
    def test_left_half_plane(self, c, g, side):
        sys = assemble_generator(build_mesh(8), BeamParameters(), DampingConfiguration.single(side, c, g))
        rep = spectrum(sys)
        assert np.all(rep.eigenvalues.real <= 1e-10 * rep.spectral_radius)

    def test_sorted_by_imaginary_part(self, small_systems):
        ev = spectrum(small_systems["shear"]).eigenvalues
        assert np.all(np.diff(ev.imag) >= 0)

    def test_capability_cap(self, small_systems):
        with pytest.raises(CapabilityError, match="coarser mesh"):
            spectrum(small_systems["none"], cap=10)

    def test_csv_round_trip(self, tmp_path, small_systems):
        rep = spectrum(small_systems["bending"])
        rep.to_csv(tmp_path / "s.csv")
        back = SpectrumReport.from_csv(tmp_path / "s.csv")
        np.testing.assert_array_equal(back.eigenvalues, rep.eigenvalues)

    def test_conjugate_detection(self):
        assert not SpectrumReport(np.array([1j, -2j])).conjugate_closed()


class TestResolventNorm:
    def test_high_frequency_limit(self, small_systems):
        sys = small_systems["shear"]
        radius = spectrum(sys).spectral_radius
        omega = 20 * radius
        assert omega * resolvent_norm(sys, omega) == pytest.approx(1.0, rel=0.05)

    def test_zero_frequency_is_inverse_norm(self, small_systems):
        sys = small_systems["bending"]
        L = np.linalg.cholesky(sys.gram.toarray())
        inv = np.linalg.inv(sys.dense_generator)
        whitened_inv = L.T @ inv @ np.linalg.inv(L.T)
        assert resolvent_norm(sys, 0.0) == pytest.approx(np.linalg.norm(whitened_inv, 2), rel=1e-9)

    @given(st.floats(0.1, 200.0))
    @settings(max_examples=15, deadline=None)
    def test_conjugation_symmetry(self, small_systems, omega):
        sys = small_systems["shear"]
        assert _sigma_min(sys, -omega) == pytest.approx(_sigma_min(sys, omega), rel=1e-10)

    def test_on_spectrum(self, small_systems):
        sys = small_systems["none"]
        ev = spectrum(sys).eigenvalues
        target = ev[ev.imag > 1][0]
        with pytest.raises(OnSpectrumError) as info:
            resolvent_norm(sys, target.imag)
        assert info.value.nearest == pytest.approx(target)

    def test_dominates_inverse_whitened_distance(self):
        freqs = np.array([3.0, 7.0, 11.0])
        sys = oscillator_system(freqs, [0.1, 0.2, 0.05])
        ev = spectrum(sys).eigenvalues
        for omega in (2.0, 6.9, 11.03):
            assert resolvent_norm(sys, omega) >= 1 / np.min(np.abs(1j * omega - ev)) * (1 - 1e-12)

    def test_energy_geometry(self, small_systems):
        """The norm is invariant under a change of basis that preserves the gram."""
        sys = small_systems["shear"]
        omega = 5.3
        L = sys.gram_factor
        A = L.T @ sys.dense_generator @ np.linalg.inv(L.T)
        direct = np.linalg.norm(np.linalg.inv(1j * omega * np.eye(sys.dim) - A), 2)
        assert resolvent_norm(sys, omega) == pytest.approx(direct, rel=1e-9)


class TestSweep:
    def test_synthetic_square_growth(self):
        grid = log_grid(10.0, 300.0, 25)
        sys = oscillator_system(grid, grid**-2.0)
        sweep = resolvent_sweep(sys, 10.0, 300.0, points=25)
        assert sweep.resonant.all()
        assert sweep.fitted_beta == pytest.approx(2.0, abs=1e-6)
        np.testing.assert_allclose(sweep.norms, grid**2, rtol=1e-8)

    def test_band_supremum_finds_off_grid_peaks(self):
        grid = log_grid(10.0, 1000.0, 33)
        peaks = grid[:-1] * 10 ** (0.3 / 32)  # inside each band, away from the grid point
        sys = oscillator_system(peaks, peaks**-2.0)
        sweep = resolvent_sweep(sys, 10.0, 1000.0, points=33)
        np.testing.assert_allclose(sweep.peak_omegas[:-1], peaks, rtol=1e-12)
        assert not sweep.resonant[-1]
        assert sweep.fitted_beta == pytest.approx(2.0, abs=1e-6)
        assert np.all(sweep.grid_norms[:-1] < sweep.norms[:-1])

    def test_empty_bands_are_excluded(self):
        grid = log_grid(10.0, 1000.0, 33)
        keep = np.arange(0, 33, 2)
        sys = oscillator_system(grid[keep], grid[keep] ** -1.0)
        sweep = resolvent_sweep(sys, 10.0, 1000.0, points=33)
        np.testing.assert_array_equal(np.flatnonzero(sweep.resonant), keep)
        assert sweep.fitted_beta == pytest.approx(1.0, abs=1e-6)

    def test_undamped_reports_spikes(self, small_systems):
        sys = small_systems["none"]
        sweep = resolvent_sweep(sys, 2.0, sys.resolved_omega_max, points=12)
        assert len(sweep.spikes) > 0
        assert np.isinf(sweep.norms[sweep.resonant]).all()
        assert math.isnan(sweep.fitted_beta)

    def test_grid_point_on_pole_is_guarded(self):
        sys = oscillator_system([10.0, 20.0], [0.0, 0.0])
        sweep = resolvent_sweep(sys, 10.0, 20.0, points=8)
        assert math.isnan(sweep.grid_norms[0]) and math.isnan(sweep.grid_norms[-1])

    def test_fit_range_clipped_to_resolved(self, small_systems):
        sys = small_systems["shear"]
        sweep = resolvent_sweep(sys, 2.0, 1000.0)
        assert sweep.fit_range == (2.0, sys.resolved_omega_max)
        assert sweep.resolved_omega_max == pytest.approx(4 * np.pi)

    def test_unresolved_range(self, small_systems):
        with pytest.raises(ConfigurationError, match="refine the mesh"):
            resolvent_sweep(small_systems["shear"], 50.0, 100.0)

    @pytest.mark.parametrize("lo, hi, points", [(0.0, 1.0, 10), (5.0, 1.0, 10), (1.0, 5.0, 4)])
    def test_rejects_bad_grids(self, small_systems, lo, hi, points):
        with pytest.raises(ConfigurationError):
            resolvent_sweep(small_systems["shear"], lo, hi, points)

    def test_default_density(self):
        assert default_points(10, 1000) == 33
        assert default_points(10, 11) == 8

    def test_csv_round_trip(self, tmp_path):
        grid = log_grid(10.0, 1000.0, 17)
        sys = oscillator_system(grid, grid**-1.5)
        sweep = resolvent_sweep(sys, 10.0, 1000.0, points=17)
        sweep.to_csv(tmp_path / "w.csv")
        back = ResolventSweep.from_csv(tmp_path / "w.csv", sweep.fit_range)
        np.testing.assert_array_equal(back.norms, sweep.norms)
        assert back.fitted_beta == sweep.fitted_beta


class TestFit:
    omegas = log_grid(1.0, 1e3, 40)

    @pytest.mark.parametrize("beta", [0.0, 1.0, 2.0])
    def test_recovers_injected_exponents(self, beta):
        sweep = ResolventSweep.from_arrays(self.omegas, 3.0 * self.omegas**beta)
        assert abs(sweep.fitted_beta - beta) <= 1e-10
        assert sweep.residual <= 1e-10

    def test_prior_work_scaling(self):
        sweep = ResolventSweep.from_arrays(self.omegas, self.omegas ** (1 / (1 - 0.5)))
        assert sweep.fitted_beta == pytest.approx(2.0, abs=1e-10)

    def test_restricted_range(self):
        norms = np.where(self.omegas < 30, self.omegas, 30 * (self.omegas / 30) ** 2)
        sweep = ResolventSweep.from_arrays(self.omegas, norms)
        beta, _ = fit_resolvent_exponent(sweep, (40.0, 1e3))
        assert beta == pytest.approx(2.0, abs=1e-10)

    def test_too_few_points(self):
        sweep = ResolventSweep.from_arrays(self.omegas, self.omegas)
        with pytest.raises(FitError):
            fit_resolvent_exponent(sweep, (1.0, 2.0))


class TestCertificate:
    omegas = log_grid(1.0, 100.0, 21)

    def test_exact_power_law(self):
        sweep = ResolventSweep.from_arrays(self.omegas, 0.7 * self.omegas**2)
        assert boundedness_certificate(sweep, 2.0).value == pytest.approx(0.7, rel=1e-12)

    def test_bump(self):
        norms = self.omegas**2.0
        norms[7] *= 5
        cert = boundedness_certificate(ResolventSweep.from_arrays(self.omegas, norms), 2.0)
        assert cert.omega == self.omegas[7]
        assert cert.value == pytest.approx(5.0)

    def test_empty_range(self):
        sweep = ResolventSweep.from_arrays(self.omegas, self.omegas)
        assert math.isnan(boundedness_certificate(sweep, 2.0, (500.0, 600.0)).value)
