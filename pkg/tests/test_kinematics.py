"""Collision-rule and cross-section tests.

Expected values for the worked collision example were derived by hand from
the post-collision map (u' = ((1-a)/2) u + ((1+a)/2)|u| sigma) and
cross-checked against the energy-loss formula.
"""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from granubath.errors import NumericsError
from granubath.kinematics import (CrossSection, angular_density, energy_loss,
                                  kernel_constants, load_cross_section_table,
                                  post_collision, relative_speed_factor,
                                  sample_sigma, sample_sigma_batch,
                                  uniform_sphere, validate_cross_section)
from granubath.quadrature import adaptive_gauss_legendre, sphere_area


class TestPostCollision:
    def test_hand_worked_example(self):
        # v=(1,0,0), v*=(-1,0,0), sigma=(0,1,0), alpha=0.5:
        # u=(2,0,0), u' = 0.25*(2,0,0) + 0.75*2*(0,1,0) = (0.5,1.5,0)
        vp, vsp = post_collision([1, 0, 0], [-1, 0, 0], [0, 1, 0], 0.5)
        np.testing.assert_allclose(vp, [0.25, 0.75, 0.0], atol=1e-15)
        np.testing.assert_allclose(vsp, [-0.25, -0.75, 0.0], atol=1e-15)

    def test_elastic_conserves_energy(self, rng):
        v = rng.standard_normal((500, 3))
        w = rng.standard_normal((500, 3))
        sigma = uniform_sphere(rng, 500, 3)
        vp, vsp = post_collision(v, w, sigma, 1.0)
        before = np.sum(v ** 2 + w ** 2, axis=1)
        after = np.sum(vp ** 2 + vsp ** 2, axis=1)
        np.testing.assert_allclose(after, before, rtol=1e-12)

    def test_head_on_direction_is_identity(self, rng):
        v = rng.standard_normal((100, 3))
        w = rng.standard_normal((100, 3))
        u = v - w
        sigma = u / np.linalg.norm(u, axis=1, keepdims=True)
        for alpha in (0.0, 0.3, 0.7, 1.0):
            vp, vsp = post_collision(v, w, sigma, alpha)
            np.testing.assert_allclose(vp, v, atol=1e-12)
            np.testing.assert_allclose(vsp, w, atol=1e-12)

    def test_momentum_conservation_random(self, rng):
        v = rng.standard_normal((10_000, 3)) * 3
        w = rng.standard_normal((10_000, 3)) * 3
        sigma = uniform_sphere(rng, 10_000, 3)
        for alpha in (0.0, 0.5, 0.9, 1.0):
            vp, vsp = post_collision(v, w, sigma, alpha)
            drift = np.linalg.norm(vp + vsp - v - w, axis=1)
            scale = 1.0 + np.linalg.norm(v, axis=1) + np.linalg.norm(w, axis=1)
            assert np.max(drift / scale) < 1e-12

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError, match="dimension"):
            post_collision([1, 0, 0], [0, 1], [0, 0, 1], 0.5)

    def test_non_unit_sigma_rejected(self):
        with pytest.raises(ValueError, match="unit"):
            post_collision([1, 0, 0], [0, 1, 0], [0, 0, 1.1], 0.5)

    def test_relative_speed_magnitude_identity(self, rng):
        v = rng.standard_normal((2000, 3))
        w = rng.standard_normal((2000, 3))
        sigma = uniform_sphere(rng, 2000, 3)
        alpha = 0.77
        vp, vsp = post_collision(v, w, sigma, alpha)
        u = v - w
        speed = np.linalg.norm(u, axis=1)
        cosx = np.sum(u * sigma, axis=1) / speed
        observed = np.sum((vp - vsp) ** 2, axis=1)
        expected = speed ** 2 * relative_speed_factor(alpha, cosx)
        np.testing.assert_allclose(observed, expected, rtol=1e-10)


class TestEnergyLoss:
    def test_hand_worked_example(self):
        # -((1-0.25)/4)*(1-0)*|u|^2 with |u|=2
        val = energy_loss([1, 0, 0], [-1, 0, 0], [0, 1, 0], 0.5)
        assert val == pytest.approx(-0.75, rel=1e-14)

    def test_elastic_loss_is_zero(self, rng):
        v = rng.standard_normal((100, 3))
        w = rng.standard_normal((100, 3))
        sigma = uniform_sphere(rng, 100, 3)
        np.testing.assert_allclose(energy_loss(v, w, sigma, 1.0), 0.0, atol=1e-15)

    def test_head_on_direction_loss_is_zero(self, rng):
        v = rng.standard_normal((50, 3))
        w = rng.standard_normal((50, 3))
        u = v - w
        sigma = u / np.linalg.norm(u, axis=1, keepdims=True)
        np.testing.assert_allclose(energy_loss(v, w, sigma, 0.3), 0.0, atol=1e-12)

    def test_zero_relative_velocity_is_noop(self):
        v = np.array([1.0, 2.0, 3.0])
        assert energy_loss(v, v, [0, 0, 1.0], 0.5) == 0.0

    def test_matches_post_collision_energies(self, rng):
        v = rng.standard_normal((5000, 3))
        w = rng.standard_normal((5000, 3))
        sigma = uniform_sphere(rng, 5000, 3)
        alphas = rng.random(5000)
        # vectorize over per-sample alpha through the closed form at alpha=0
        base = energy_loss(v, w, sigma, 0.0)
        predicted = base * (1.0 - alphas ** 2)
        vp, vsp = post_collision(v, w, sigma, 0.0)
        for alpha in (0.2, 0.6, 0.95):
            vp, vsp = post_collision(v, w, sigma, alpha)
            measured = np.sum(vp ** 2 + vsp ** 2 - v ** 2 - w ** 2, axis=1)
            scale = np.sum(v ** 2 + w ** 2, axis=1) + 1.0
            err = np.abs(measured - base * (1 - alpha ** 2)) / scale
            assert err.max() < 1e-12
        assert predicted.shape == (5000,)

    def test_loss_never_positive(self, rng):
        v = rng.standard_normal((1000, 3))
        w = rng.standard_normal((1000, 3))
        sigma = uniform_sphere(rng, 1000, 3)
        assert np.all(energy_loss(v, w, sigma, 0.4) <= 0)


class TestKernelConstants:
    def test_constant_cross_section_closed_forms(self, unit_cs, kc3):
        # b0 = full sphere integral of 1 = 4 pi; b1 = (1/8) * 2pi * 2 = pi/2
        assert kc3.b0 == pytest.approx(4 * math.pi, rel=1e-12)
        assert kc3.b1 == pytest.approx(math.pi / 2, rel=1e-12)
        assert kc3.b2 == pytest.approx(kc3.b0, rel=1e-12)

    def test_scales_linearly_with_amplitude(self):
        kc = kernel_constants(CrossSection(kind="constant", b0_prime=2.5), 3)
        assert kc.b0 == pytest.approx(2.5 * 4 * math.pi, rel=1e-12)
        assert kc.b1 == pytest.approx(2.5 * math.pi / 2, rel=1e-12)

    @pytest.mark.parametrize("dim", [2, 3, 4])
    def test_other_dimensions_against_quad(self, unit_cs, dim):
        # independent oracle: scipy.quad on the polar-angle form
        kc = kernel_constants(unit_cs, dim)
        ring = sphere_area(dim - 1)
        b0_ref, _ = integrate.quad(
            lambda phi: ring * math.sin(phi) ** (dim - 2), 0, math.pi)
        b1_ref, _ = integrate.quad(
            lambda phi: ring / 8 * (1 - math.cos(phi)) * math.sin(phi) ** (dim - 2),
            0, math.pi)
        assert kc.b0 == pytest.approx(b0_ref, abs=1e-10)
        assert kc.b1 == pytest.approx(b1_ref, abs=1e-10)

    def test_tabulated_matches_analytic(self):
        grid = np.linspace(-1, 1, 2001)
        cs_tab = CrossSection(kind="tabulated", grid=grid, values=1.0 + 0.5 * grid)
        kc = kernel_constants(cs_tab, 3)
        # int over sphere of (1 + x/2): 2pi * [x + x^2/4] = 4pi;
        # b1 = (1/8) 2pi int (1-x)(1+x/2) dx = (1/8) 2pi (2 - 1/3) = 5pi/12
        assert kc.b0 == pytest.approx(4 * math.pi, rel=1e-8)
        assert kc.b1 == pytest.approx(5 * math.pi / 12, rel=1e-8)

    def test_quadrature_failure_reports_achieved_error(self):
        with pytest.raises(NumericsError) as err:
            adaptive_gauss_legendre(lambda x: np.sin(1.0 / (np.abs(x) + 1e-12)),
                                    0.0, 1.0, tol=1e-14, order=4, max_doublings=3)
        assert "achieved_error" in err.value.diagnostics


class TestSampleSigma:
    def test_constant_b_uniform_mean(self, unit_cs, rng):
        n = 200_000
        u_hat = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
        sig = sample_sigma_batch(unit_cs, u_hat, rng)
        assert np.linalg.norm(sig.mean(axis=0)) < 4.0 / math.sqrt(n)

    def test_constant_b_marginal_uniform(self, unit_cs, rng):
        # x = uhat.sigma is uniform on [-1,1] for constant b in 3d
        n = 100_000
        u_hat = np.tile(np.array([1.0, 0.0, 0.0]), (n, 1))
        sig = sample_sigma_batch(unit_cs, u_hat, rng)
        x = sig[:, 0]
        res = stats.kstest(x, stats.uniform(loc=-1, scale=2).cdf)
        assert res.pvalue > 0.01

    def test_linear_b_marginal_matches_density(self, rng):
        grid = np.linspace(-1, 1, 1001)
        cs = CrossSection(kind="tabulated", grid=grid, values=1.0 + 0.5 * grid)
        n = 100_000
        u_hat = np.tile(np.array([0.0, 1.0, 0.0]), (n, 1))
        sig = sample_sigma_batch(cs, u_hat, rng)
        x = np.sort(sig[:, 1])
        # analytic cdf of density prop to (1 + t/2) on [-1,1]:
        # normalization 2, antiderivative t + t^2/4 evaluated from -1
        cdf = lambda t: (t + t ** 2 / 4 + 0.75) / 2.0
        res = stats.kstest(x, cdf)
        assert res.pvalue > 0.01

    def test_tight_bounds_accept_everything(self, unit_cs, rng):
        # constant b short-circuits rejection; draw counts confirm one
        # proposal per output through the stream position
        state = rng.bit_generator.state
        out = sample_sigma_batch(unit_cs, np.eye(3)[:1], rng)
        assert out.shape == (1, 3)
        rng.bit_generator.state = state
        ref = uniform_sphere(rng, 1, 3)
        np.testing.assert_allclose(out, ref)

    def test_single_sigma_contract(self, unit_cs, rng):
        s = sample_sigma(unit_cs, np.array([1.0, 0.0, 0.0]), rng)
        assert s.shape == (3,)
        assert np.linalg.norm(s) == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(ValueError):
            sample_sigma(unit_cs, np.array([2.0, 0.0, 0.0]), rng)

    def test_angular_density_formula(self, unit_cs):
        x = np.linspace(-0.99, 0.99, 7)
        np.testing.assert_allclose(angular_density(unit_cs, x, 3), np.ones(7))
        d4 = angular_density(unit_cs, x, 4)
        np.testing.assert_allclose(d4, np.sqrt(1 - x ** 2))


class TestValidation:
    def test_constant_passes(self, unit_cs):
        report = validate_cross_section(unit_cs, grid_size=101)
        assert report.passed and report.violations == []

    def test_power_law_dimension3_passes(self):
        cs = CrossSection(kind="power-law", b0_prime=1.0, dim=3)
        assert validate_cross_section(cs).passed

    def test_decreasing_table_flagged(self):
        cs = CrossSection(kind="tabulated", grid=np.array([-1.0, 0.0, 1.0]),
                          values=np.array([1.0, 2.0, 1.5]))
        report = validate_cross_section(cs, grid_size=5)
        kinds = {v["kind"] for v in report.violations}
        assert not report.passed and "monotonicity" in kinds

    def test_report_is_json(self, unit_cs):
        import json
        payload = json.loads(validate_cross_section(unit_cs).to_json())
        assert payload["passed"] is True

    def test_grid_size_minimum(self, unit_cs):
        with pytest.raises(ValueError):
            validate_cross_section(unit_cs, grid_size=2)


class TestTableLoading:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "cs.txt"
        path.write_text("# test table\n-1.0 1.0\n0.0 1.5\n1.0 2.0\n")
        cs = load_cross_section_table(path)
        assert cs.kind == "tabulated"
        assert cs(0.5) == pytest.approx(1.75)
        assert cs.bounds == (1.0, 2.0)

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("0.0 1.0 extra\n")
        with pytest.raises(ValueError, match="expected"):
            load_cross_section_table(path)
