import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kvbeam.discretization import DiscreteState, assemble_generator, build_mesh, h_norm, interpolate
from kvbeam.exceptions import ConfigurationError, FitError
from kvbeam.experiments import initial_state
from kvbeam.model import BeamParameters, DampingConfiguration
from kvbeam.time_domain import (
    Trajectory,
    default_window,
    dissipation_identity_residual,
    fit_decay_exponent,
    local_slopes,
    log_thin,
    simulate,
    step,
)

vectors = arrays(np.float64, 60, elements=st.floats(-1, 1))


def synthetic(times, norms, graph=1.0):
    norms = np.asarray(norms, dtype=float)
    return Trajectory(np.asarray(times, float), norms, 0.5 * norms**2, np.zeros_like(norms), graph)


class TestStep:
    def test_zero(self, small_systems):
        assert not step(small_systems["shear"], np.zeros(60), 0.1).as_vector().any()

    @settings(max_examples=30, deadline=None)
    @given(vectors, st.floats(1e-3, 1.0))
    def test_undamped_preserves_norm(self, small_systems, u, dt):
        sys = small_systems["none"]
        assert h_norm(sys, step(sys, u, dt)) == pytest.approx(h_norm(sys, u), rel=1e-10, abs=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(vectors, st.sampled_from(["shear", "bending"]))
    def test_damped_never_increases(self, small_systems, u, side):
        sys = small_systems[side]
        before = h_norm(sys, u)
        assert h_norm(sys, step(sys, u, 0.05)) <= before * (1 + 1e-12) + 1e-15

    @pytest.mark.parametrize("side", ["shear", "bending"])
    def test_damped_strict_decrease_matches_reference(self, small_systems, side):
        sys = small_systems[side]
        mesh = build_mesh(16)
        u = interpolate(mesh, initial_state("random-smooth", seed=4))
        coarse = step(sys, u, 0.005)
        fine = u
        for _ in range(64):
            fine = step(sys, fine, 0.005 / 64)
        assert h_norm(sys, coarse) < h_norm(sys, u)
        assert h_norm(sys, fine) < h_norm(sys, u)
        drop_coarse = h_norm(sys, u) - h_norm(sys, coarse)
        drop_fine = h_norm(sys, u) - h_norm(sys, fine)
        assert drop_coarse == pytest.approx(drop_fine, rel=1e-2)

    def test_rejects_bad_dt(self, small_systems):
        with pytest.raises(ConfigurationError):
            step(small_systems["none"], np.zeros(60), 0.0)

    def test_returns_discrete_state(self, small_systems):
        assert isinstance(step(small_systems["none"], np.ones(60), 0.1), DiscreteState)


class TestSimulate:
    def test_zero_data(self, small_systems):
        traj = simulate(small_systems["shear"], np.zeros(60), 1.0, 0.1)
        assert not traj.h_norms.any() and not traj.dissipation.any()
        assert traj.initial_graph_norm == 0

    def test_sampling_grid(self, small_systems):
        traj = simulate(small_systems["none"], np.ones(60), 1.0, 0.01, sample_every=7)
        assert len(traj.times) == 100 // 7 + 1
        np.testing.assert_allclose(np.diff(traj.times), 0.07)

    def test_dense_and_stepwise_paths_agree(self, small_systems, monkeypatch):
        import kvbeam.time_domain as td

        u0 = np.random.default_rng(5).standard_normal(60)
        a = simulate(small_systems["bending"], u0, 2.0, 0.01, 10)
        monkeypatch.setattr(td, "DENSE_PROPAGATOR_CAP", 0)
        b = simulate(small_systems["bending"], u0, 2.0, 0.01, 10)
        np.testing.assert_allclose(a.h_norms, b.h_norms, rtol=1e-11)

    @pytest.mark.parametrize("bad", [dict(t_end=0.0), dict(dt=-1.0), dict(sample_every=0), dict(sample_every=1.5)])
    def test_rejects_bad_controls(self, small_systems, bad):
        kw = dict(t_end=1.0, dt=0.1, sample_every=1) | bad
        with pytest.raises(ConfigurationError):
            simulate(small_systems["none"], np.ones(60), **kw)

    def test_undamped_conservation(self, small_systems):
        mesh = build_mesh(16)
        traj = simulate(small_systems["none"], interpolate(mesh, initial_state("mode1-mixed")), 100.0, 0.01, 10)
        assert np.max(np.abs(traj.energies - traj.energies[0])) <= 1e-8 * traj.energies[0]

    @pytest.mark.parametrize("side", ["shear", "bending"])
    def test_damped_monotone(self, small_systems, side):
        mesh = build_mesh(16)
        traj = simulate(small_systems[side], interpolate(mesh, initial_state("bump-left")), 50.0, 0.01)
        assert np.all(np.diff(traj.energies) <= 1e-12 * traj.energies[0])
        assert np.all(traj.dissipation <= 0)

    def test_half_step_rerun_agrees_to_second_order(self, small_systems):
        mesh = build_mesh(16)
        u0 = interpolate(mesh, initial_state("mode1-mixed"))
        runs = [simulate(small_systems["shear"], u0, 2.0, dt, round(0.1 / dt)) for dt in (0.02, 0.01, 0.005)]
        e1 = np.max(np.abs(runs[0].h_norms - runs[2].h_norms))
        e2 = np.max(np.abs(runs[1].h_norms - runs[2].h_norms))
        # against a dt/4 reference an O(dt^2) error gives (16 - 1) / (4 - 1) = 5
        assert 4.5 < e1 / e2 < 5.5


class TestDissipationResidual:
    def test_undamped_is_zero(self, small_systems):
        traj = simulate(small_systems["none"], np.ones(60), 1.0, 0.01)
        _, worst = dissipation_identity_residual(traj)
        assert worst <= 1e-9

    def test_zero_state(self, small_systems):
        traj = simulate(small_systems["shear"], np.zeros(60), 0.01, 0.01)
        res, worst = dissipation_identity_residual(traj)
        assert worst == 0.0 and res.shape == (1,)

    def test_second_order(self, small_systems):
        mesh = build_mesh(16)
        u0 = interpolate(mesh, initial_state("mode1-mixed"))
        worst = [dissipation_identity_residual(simulate(small_systems["shear"], u0, 1.0, dt))[1] for dt in (0.01, 0.005)]
        assert 3.5 <= worst[0] / worst[1] <= 4.5

    def test_needs_two_samples(self):
        with pytest.raises(FitError):
            dissipation_identity_residual(synthetic([1.0], [1.0]))


def power_series(times, p, c=1.0):
    """``c * t**-p`` with the value at t = 0 set to ``c``."""
    out = np.full(times.shape, c)
    pos = times > 0
    out[pos] = c * times[pos] ** -p
    return out


class TestDecayFit:
    times = np.linspace(0, 1000, 10001)

    @pytest.mark.parametrize("p", [0.25, 0.5, 1.0, 2.0])
    def test_recovers_power_laws(self, p):
        t = self.times
        norms = power_series(t, p)
        fit = fit_decay_exponent(synthetic(t, norms, 2.0), (1.0, 1000.0))
        assert abs(fit.exponent - p) <= 1e-10
        assert fit.residual <= 1e-10
        assert fit.constant == pytest.approx(0.5, rel=1e-10)

    def test_constant_recovery(self):
        t = self.times
        norms = power_series(t, 1.0, 3.0)
        fit = fit_decay_exponent(synthetic(t, norms, 6.0), (2.0, 500.0))
        assert fit.exponent == pytest.approx(1.0, abs=1e-10)
        assert fit.constant == pytest.approx(0.5, rel=1e-10)
        assert fit.window == (2.0, 500.0)

    def test_bound_ratio_of_exact_half_power(self):
        t = self.times
        fit = fit_decay_exponent(synthetic(t, power_series(t, 0.5)), (1.0, 1000.0))
        assert fit.bound_ratio == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.05, 3.0), st.floats(0.1, 10.0))
    def test_recovers_any_exponent_unthinned(self, p, c):
        t = np.linspace(1, 100, 200)
        fit = fit_decay_exponent(synthetic(t, c * t**-p), (1.0, 100.0), thin=False)
        assert fit.exponent == pytest.approx(p, abs=1e-9)

    def test_too_few_samples(self):
        t = np.arange(1.0, 20.0)
        with pytest.raises(FitError):
            fit_decay_exponent(synthetic(t, t**-0.5), (1.0, 5.0))

    def test_non_positive_norms(self):
        t = np.arange(1.0, 30.0)
        norms = t**-0.5
        norms[5] = 0.0
        with pytest.raises(FitError):
            fit_decay_exponent(synthetic(t, norms), (1.0, 29.0))

    @pytest.mark.parametrize("window", [(0.0, 10.0), (10.0, 5.0)])
    def test_invalid_window(self, window):
        t = np.arange(1.0, 30.0)
        with pytest.raises(FitError):
            fit_decay_exponent(synthetic(t, t**-0.5), window)


class TestWindow:
    def test_cuts_before_exponential_tail(self):
        t = np.linspace(0, 1e4, 100001)
        norms = power_series(t, 0.5) * np.exp(-np.maximum(t - 2000.0, 0) / 500.0)
        lo, hi = default_window(synthetic(t, norms), wave_speed=1.0)
        assert lo == 10.0
        assert 1000.0 < hi < 3000.0
        assert fit_decay_exponent(synthetic(t, norms), (lo, hi)).exponent == pytest.approx(0.5, abs=0.05)

    def test_pure_power_law_keeps_everything(self):
        t = np.linspace(0, 1e3, 10001)
        norms = power_series(t, 0.5)
        assert default_window(synthetic(t, norms), 1.0) == (10.0, 1000.0)

    def test_floor_time_caps_window(self):
        t = np.linspace(0, 1e3, 10001)
        norms = power_series(t, 0.5)
        assert default_window(synthetic(t, norms), 1.0, floor_time=200.0) == (10.0, 200.0)

    def test_too_short_run(self):
        t = np.linspace(0, 12, 13)
        assert default_window(synthetic(t, np.ones(13)), 1.0) is None

    def test_lower_edge_follows_wave_speed(self):
        t = np.linspace(0, 1e3, 10001)
        norms = power_series(t, 0.5)
        assert default_window(synthetic(t, norms), 4.0)[0] == 2.5


class TestThinning:
    @given(st.integers(2, 5000), st.floats(0.001, 10.0))
    def test_sorted_unique_positive(self, n, dt):
        t = dt * np.arange(n)
        idx = log_thin(t)
        assert np.all(np.diff(idx) > 0)
        assert np.all(t[idx] > 0)
        assert idx[0] == 1 and idx[-1] == n - 1

    def test_density_per_decade(self):
        t = np.linspace(0, 1e4, 1000001)
        idx = log_thin(t)
        decades = np.log10(t[idx[-1]] / t[idx[0]])
        assert len(idx) <= 20 * decades + 2

    def test_local_slopes_of_power_law(self):
        t = np.logspace(0, 3, 61)
        np.testing.assert_allclose(local_slopes(t, t**-0.7)[5:-5], 0.7, atol=1e-12)


def test_trajectory_csv_round_trip(tmp_path, small_systems):
    mesh = build_mesh(16)
    traj = simulate(small_systems["bending"], interpolate(mesh, initial_state("mode1-mixed")), 1.0, 0.01, 5)
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,h_norm,energy,dissipation,normalized_bound"
    back = Trajectory.from_csv(path)
    np.testing.assert_array_equal(back.h_norms, traj.h_norms)
    np.testing.assert_array_equal(back.dissipation, traj.dissipation)
    assert back.initial_graph_norm == pytest.approx(traj.initial_graph_norm, rel=1e-14)
    assert math.isclose(traj.normalized_bound[0], 0.0)
