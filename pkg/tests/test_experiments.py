"""Experiment-harness tests at reduced particle counts.

These check mechanics (determinism, windows, verdict logic) and loose
physics; the quantitative tolerances of the full-scale studies live in the
acceptance suite.
"""

import numpy as np
import pytest

from granubath import experiments as ex
from granubath.engine import MaxwellianInit, SimConfig
from granubath.errors import ConfigError, NumericsError


def spec_for(kind, alpha=0.9, n=3000, seed=7, **kw):
    cfg_kw = dict(alpha=alpha, n_particles=n, seed=seed)
    for key in ("init", "tau_mode", "tau_value", "target_energy"):
        if key in kw:
            cfg_kw[key] = kw.pop(key)
    return ex.ExperimentSpec(kind=kind, config=SimConfig(**cfg_kw), **kw)


class TestSpecValidation:
    def test_kind_checked(self):
        with pytest.raises(ConfigError):
            spec_for("warmup")

    def test_replica_minimum(self):
        with pytest.raises(ConfigError):
            spec_for("steady", replicas=0)

    def test_burn_in_before_end(self):
        with pytest.raises(ConfigError):
            spec_for("steady", burn_in=5.0, t_end=4.0)


class TestSteadyState:
    def test_reaches_prediction(self):
        spec = spec_for("steady", alpha=0.9, n=4000, replicas=2,
                        burn_in=1.5, t_end=5.0)
        res = ex.steady_state(spec)
        assert res.theta == pytest.approx(res.theta_predicted, rel=0.05)
        assert abs(res.residual) < 0.1
        assert res.theta_err > 0

    def test_deterministic_rerun(self):
        spec = spec_for("steady", n=2000, replicas=2, burn_in=0.5, t_end=2.0)
        a = ex.steady_state(spec)
        b = ex.steady_state(spec)
        assert a.theta == b.theta
        assert a.residual == b.residual
        assert a.distance_limit == b.distance_limit

    def test_serial_matches_parallel(self):
        spec1 = spec_for("steady", n=2000, replicas=2, burn_in=0.5, t_end=2.0,
                         workers=1)
        spec2 = spec_for("steady", n=2000, replicas=2, burn_in=0.5, t_end=2.0,
                         workers=2)
        assert ex.steady_state(spec1).theta == ex.steady_state(spec2).theta

    def test_alpha_one_needs_explicit_horizons(self):
        spec = spec_for("steady", alpha=1.0, n=2000, replicas=1)
        with pytest.raises(ConfigError):
            ex.steady_state(spec)


class TestSweep:
    def test_minimum_alpha_count(self):
        with pytest.raises(ConfigError):
            spec_for("sweep", alphas=(0.9, 0.95))

    def test_distances_decrease_toward_elastic(self):
        spec = spec_for("sweep", n=4000, replicas=2,
                        alphas=(0.85, 0.92, 0.97))
        res = ex.alpha_sweep(spec)
        dists = [r.distance_limit for r in res.rows]
        assert dists[0] > dists[-1]
        thetas = [r.theta for r in res.rows]
        assert thetas[0] > thetas[-1]  # theta decreases toward the limit

    def test_mass_invariance_of_scaled_distance(self):
        # doubling rho doubles rates and distances; distance/rho is
        # mass-invariant up to noise
        results = {}
        for rho in (1.0, 2.0):
            spec = ex.ExperimentSpec(
                kind="steady",
                config=SimConfig(alpha=0.9, n_particles=4000, seed=37, rho=rho),
                replicas=2)
            results[rho] = ex.steady_state(spec)
        d1 = results[1.0].distance_limit / 1.0
        d2 = results[2.0].distance_limit / 2.0
        err = 3 * (results[1.0].distance_limit_err
                   + results[2.0].distance_limit_err / 2.0)
        assert abs(d1 - d2) <= err + 0.1 * d1
        assert results[2.0].theta == pytest.approx(results[1.0].theta, rel=0.02)

    def test_elastic_control_run_relaxes_to_maxwellian(self, kc3, prediction):
        # alpha=1, tau=0: the elastic gas equilibrates to the Maxwellian
        # matched to its (conserved) initial energy
        theta0 = prediction.theta_limit
        spec = ex.ExperimentSpec(
            kind="steady",
            config=SimConfig(alpha=1.0, n_particles=8000, seed=11,
                             init=MaxwellianInit(theta0),
                             target_energy=3 * theta0),
            replicas=2, burn_in=1.0, t_end=4.0)
        res = ex.steady_state(spec)
        assert res.distance_limit < max(3 * res.noise_floor, 0.02)


class TestRelaxation:
    def test_negative_rate_and_support(self):
        spec = spec_for("relax", alpha=0.93, n=4000, replicas=4)
        res = ex.relaxation_fit(spec)
        assert res.fit.estimate < 0
        assert res.fit.stderr >= 0
        assert res.supported in ("scaled", "unscaled")
        assert res.fit.n_points >= 10

    def test_perturbation_bound(self):
        spec = spec_for("relax", delta=0.5)
        with pytest.raises(ConfigError):
            ex.relaxation_fit(spec)

    def test_window_refusal_on_short_run(self):
        spec = spec_for("relax", alpha=0.93, n=500, replicas=1, t_end=0.05)
        with pytest.raises(NumericsError, match="refused"):
            ex.relaxation_fit(spec)

    def test_predicted_steady_energy_mode(self):
        spec = spec_for("relax", alpha=0.9, n=3000, replicas=3)
        res = ex.relaxation_fit(spec, steady_energy="predicted")
        assert res.steady_energy_used == pytest.approx(
            3 * ex.prediction_for(spec.config)[1].steady_temperature(0.9),
            rel=1e-12)


class TestLyapunov:
    def test_bimodal_trace_passes(self):
        spec = spec_for("lyapunov", alpha=0.97, n=8000, seed=13, replicas=4,
                        t_end=6.0)
        res = ex.lyapunov_trace(spec)
        assert res.passed
        assert res.timescale_ratio > 3
        assert res.h1_smoothed[0] > res.h1_smoothed[-1]

    def test_smoothing_window_minimum(self):
        spec = spec_for("lyapunov")
        with pytest.raises(ConfigError):
            ex.lyapunov_trace(spec, smooth_width=10)

    def test_steady_start_is_flat_pass(self, prediction):
        theta = prediction.steady_temperature(0.97)
        spec = ex.ExperimentSpec(
            kind="lyapunov",
            config=SimConfig(alpha=0.97, n_particles=6000, seed=17,
                             init=MaxwellianInit(theta),
                             target_energy=3 * theta),
            replicas=4, t_end=4.0)
        # a steady start has no entropy decay to fit; only the verdict on
        # monotonicity is meaningful
        try:
            res = ex.lyapunov_trace(spec)
            assert res.passed
        except NumericsError as err:
            assert "refused" in str(err) or "no decay" in str(err)


class TestScaling:
    def test_lambda_one_identical(self):
        spec = spec_for("scaling", alpha=0.95, n=2000, replicas=2, t_end=1.0,
                        init=MaxwellianInit(0.5), lam=1.0)
        res = ex.scaling_check(spec)
        assert res.max_deviation == 0.0
        assert res.passed

    def test_elastic_no_bath_trivially_scales(self):
        spec = ex.ExperimentSpec(
            kind="scaling",
            config=SimConfig(alpha=1.0, n_particles=2000, seed=23,
                             tau_mode="explicit", tau_value=0.0,
                             init=MaxwellianInit(0.5)),
            replicas=2, t_end=1.0, lam=2.0)
        res = ex.scaling_check(spec)
        # both runs conserve energy exactly, so mapped trajectories agree
        assert res.max_deviation < 1e-12

    def test_lambda_range_checked(self):
        spec = spec_for("scaling", lam=3.0)
        with pytest.raises(ConfigError):
            ex.scaling_check(spec)

    def test_shared_streams_are_exactly_equivariant(self):
        # with shared replica streams the solver maps path-by-path under
        # the rescaling, so the deviation is pure rounding
        spec = spec_for("scaling", alpha=0.95, n=4000, seed=29, replicas=6,
                        t_end=2.0, lam=1.5, init=MaxwellianInit(0.4),
                        tau_mode="explicit", tau_value=0.05)
        res = ex.scaling_check(spec)
        assert res.max_deviation < 1e-10

    def test_independent_streams_agree_statistically(self):
        spec = spec_for("scaling", alpha=0.95, n=8000, seed=31, replicas=8,
                        t_end=2.0, lam=1.5, init=MaxwellianInit(0.4),
                        tau_mode="explicit", tau_value=0.05)
        res = ex.scaling_check(spec, tolerance=0.05, independent_streams=True)
        assert res.max_deviation > 0.0
        assert res.passed, f"max deviation {res.max_deviation:.3f}"


class TestDispatch:
    def test_run_experiment_routes(self):
        spec = spec_for("steady", n=2000, replicas=1, burn_in=0.3, t_end=1.0)
        res = ex.run_experiment(spec)
        assert res.alpha == 0.9


class TestFitHelper:
    def test_linear_fit_recovers_slope(self, rng):
        x = np.linspace(0, 10, 50)
        y = 2.5 - 0.7 * x + 0.01 * rng.standard_normal(50)
        fit = ex._linear_fit(x, y)
        assert fit.estimate == pytest.approx(-0.7, abs=0.01)
        assert fit.r_squared > 0.99
        assert fit.n_points == 50
