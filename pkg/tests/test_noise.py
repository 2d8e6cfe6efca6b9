"""
Tests for the noise module: Hurst validation, grids, exact fBm sampling,
reproducible substreams and the covariance of the noise paired with test functions.
"""

import math

import numpy as np
import pytest
from scipy.special import gamma

from spde.errors import GridError, HurstRangeError, RefusalError
from spde.noise import (GaussianBump, HurstParam, OutsideHypothesisWarning, SpaceTimeGrid,
                        TestFunction, TestPair, TruncationWarning, default_half_width,
                        default_test_pairs, fbm_covariance, increment_autocovariance,
                        pair_with_test_function, riesz_constant, sample_noise_slab,
                        sample_spatial_increments, spectral_covariance_quadrature, substream)
from spde.regularity import verification_grid, verify_noise_covariance


class TestHurstParam:

    def test_accepts_rough_regime(self):
        assert HurstParam(0.3).value == 0.3
        assert not HurstParam(0.3).outside_hypothesis

    @pytest.mark.parametrize("H", [0.25, 0.5, 0.1, 0.7, -0.3])
    def test_rejects_outside_open_interval(self, H):
        with pytest.raises(HurstRangeError):
            HurstParam(H)

    def test_override_warns_and_flags(self):
        with pytest.warns(OutsideHypothesisWarning):
            hurst = HurstParam(0.2, allow_outside=True)
        assert hurst.outside_hypothesis

    def test_override_still_rejects_smooth_noise(self):
        with pytest.raises(HurstRangeError):
            HurstParam(0.6, allow_outside=True)


class TestSpaceTimeGrid:

    def test_nodes(self):
        grid = SpaceTimeGrid(L=2.0, nx=512, T=0.5, nt=64, L_obs=0.25)
        assert grid.dx == pytest.approx(4.0 / 512)
        assert grid.x[0] == -2.0
        assert grid.t.shape == (65,)
        assert grid.t[-1] == pytest.approx(0.5)
        window = grid.x[grid.window]
        assert window.min() >= -0.25 - 1e-12 and window.max() <= 0.25 + 1e-12
        assert window.size == 65

    def test_refined_doubles_space_only(self):
        grid = SpaceTimeGrid(L=2.0, nx=512, T=0.5, nt=64, L_obs=0.25).refined()
        assert (grid.nx, grid.nt) == (1024, 64)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(GridError):
            SpaceTimeGrid(L=2.0, nx=500, T=0.5, nt=64)

    def test_rejects_window_beyond_domain(self):
        with pytest.raises(GridError):
            SpaceTimeGrid(L=1.0, nx=512, T=1.0, nt=64, L_obs=0.5)

    def test_default_half_width(self):
        assert default_half_width(0.5, 1.0) == pytest.approx(9.5)


class TestCovarianceStructure:

    def test_riesz_constant_at_brownian_index(self):
        assert riesz_constant(0.5) == pytest.approx(1.0 / (2.0 * math.pi))

    def test_riesz_constant_domain(self):
        with pytest.raises(HurstRangeError):
            riesz_constant(1.0)

    def test_fbm_covariance_is_variance_on_diagonal(self):
        assert fbm_covariance(0.7, 0.7, 0.3) == pytest.approx(0.7 ** 0.6)

    def test_increment_autocovariance(self):
        dx = 0.01
        gamma_k = increment_autocovariance(np.arange(3), 0.3, dx)
        assert gamma_k[0] == pytest.approx(dx ** 0.6)
        assert gamma_k[1] == pytest.approx(0.5 * dx ** 0.6 * (2 ** 0.6 - 2.0))


class TestSampling:

    def test_substreams_are_reproducible_and_distinct(self):
        a = substream(3, 0, 5).standard_normal(8)
        b = substream(3, 0, 5).standard_normal(8)
        c = substream(3, 0, 6).standard_normal(8)
        np.testing.assert_array_equal(a, b)
        assert not np.allclose(a, c)

    def test_increment_variance_and_lag_one_correlation(self):
        """Exact sampler: Var = Δx^{2H} and corr(lag 1) = (2^{2H} - 2)/2."""
        H = 0.3
        grid = SpaceTimeGrid(L=2.0, nx=256, T=0.5, nt=1, L_obs=0.25)
        rows = np.array([sample_spatial_increments(grid, H, substream(11, 0, n))
                         for n in range(400)])
        variance = np.mean(rows ** 2)
        assert variance == pytest.approx(grid.dx ** (2 * H), rel=0.05)
        lag_one = np.mean(rows[:, 1:] * rows[:, :-1]) / variance
        assert lag_one == pytest.approx(0.5 * (2 ** (2 * H) - 2.0), abs=0.03)

    def test_slab_shape_and_reproducibility(self):
        grid = SpaceTimeGrid(L=2.0, nx=256, T=0.5, nt=16, L_obs=0.25)
        slab = sample_noise_slab(grid, 0.3, seed=5, path=2)
        again = sample_noise_slab(grid, 0.3, seed=5, path=2)
        other = sample_noise_slab(grid, 0.3, seed=5, path=3)
        assert slab.increments.shape == (16, 256)
        np.testing.assert_array_equal(slab.increments, again.increments)
        assert not np.allclose(slab.increments, other.increments)
        assert np.isfinite(slab.total_mass())


class TestPairing:

    def test_truncated_support_warns(self):
        grid = SpaceTimeGrid(L=2.0, nx=256, T=0.5, nt=4, L_obs=0.25)
        slab = sample_noise_slab(grid, 0.3, seed=0)
        with pytest.warns(TruncationWarning):
            pair_with_test_function(slab, TestFunction(GaussianBump(), 0.0, 0.5))

    def test_quadrature_matches_gamma_closed_form(self):
        """bump-bump: c_H ∫ 2π e^{-ξ²} |ξ|^{1-2H} dξ = 2π c_H Γ(1-H)."""
        H = 0.3
        pair = default_test_pairs()[0]
        value = spectral_covariance_quadrature(pair.phi, pair.psi, H)
        expected = 2.0 * math.pi * riesz_constant(H) * gamma(1.0 - H)
        assert value == pytest.approx(expected, rel=1e-6)

    def test_disjoint_times_are_uncorrelated(self):
        pair = default_test_pairs()[2]
        assert spectral_covariance_quadrature(pair.phi, pair.psi, 0.3) == 0.0

    def test_refuses_small_sample(self):
        with pytest.raises(RefusalError):
            verify_noise_covariance(0.3, M=100)

    def test_sample_covariance_within_band(self):
        grid = verification_grid(nx=256, nt=8)
        report = verify_noise_covariance(0.3, M=400, seed=1, grid=grid, min_paths=400)
        assert [c.name for c in report.checks] == ["bump-bump", "bump-shifted", "disjoint-time"]
        assert report.status == "PASS", [c.model_dump() for c in report.checks]

    def test_custom_pair(self):
        bump = GaussianBump(width=0.5)
        pair = TestPair("narrow", TestFunction(bump, 0.0, 1.0), TestFunction(bump, 0.0, 1.0))
        grid = verification_grid(nx=256, nt=8)
        report = verify_noise_covariance(0.35, [pair], M=400, grid=grid, min_paths=400)
        assert report.checks[0].predicted > 0
        assert report.checks[0].passed


class TestSlabStatistics:

    def test_distinct_rows_are_uncorrelated(self):
        grid = SpaceTimeGrid(L=2.0, nx=64, T=1.0, nt=400, L_obs=0.25)
        column = sample_noise_slab(grid, 0.3, seed=13).increments[:, 32]
        corr = np.corrcoef(column[1:], column[:-1])[0, 1]
        assert abs(corr) <= 4.0 / math.sqrt(column.size - 1)

    def test_doubling_the_spacing_scales_sd_by_two_to_H(self):
        H = 0.3
        fine = SpaceTimeGrid(L=2.0, nx=512, T=0.5, nt=1, L_obs=0.25)
        coarse = SpaceTimeGrid(L=2.0, nx=256, T=0.5, nt=1, L_obs=0.25)
        a = np.array([np.mean(sample_spatial_increments(coarse, H, substream(2, 0, n)) ** 2)
                      for n in range(200)])
        b = np.array([np.mean(sample_spatial_increments(fine, H, substream(3, 0, n)) ** 2)
                      for n in range(200)])
        ratio = a.mean() / b.mean()
        stderr = ratio * math.sqrt(a.var(ddof=1) / (a.size * a.mean() ** 2)
                                   + b.var(ddof=1) / (b.size * b.mean() ** 2))
        assert abs(ratio - 2.0 ** (2 * H)) <= 4 * stderr
        assert math.sqrt(ratio) == pytest.approx(2.0 ** H, rel=0.03)

    def test_total_mass_variance(self):
        """Σ ΔX over the slab has variance T (2L)^{2H}."""
        H = 0.3
        grid = SpaceTimeGrid(L=2.0, nx=64, T=0.5, nt=4, L_obs=0.25)
        squares = np.array([sample_noise_slab(grid, H, seed=8, path=m).total_mass() ** 2
                            for m in range(2000)])
        target = grid.T * (2.0 * grid.L) ** (2 * H)
        stderr = squares.std(ddof=1) / math.sqrt(squares.size)
        assert abs(squares.mean() - target) <= 4 * stderr

    def test_unit_pairing_is_total_mass(self):
        grid = SpaceTimeGrid(L=2.0, nx=64, T=0.5, nt=4, L_obs=0.25)
        slab = sample_noise_slab(grid, 0.3, seed=8)
        value = pair_with_test_function(slab, lambda t, x: np.ones(np.broadcast(t, x).shape))
        assert value == pytest.approx(slab.total_mass(), rel=1e-12)


class TestPairingAlgebra:

    def test_pairing_is_linear(self):
        grid = SpaceTimeGrid(L=2.0, nx=256, T=0.5, nt=8, L_obs=0.25)
        slab = sample_noise_slab(grid, 0.3, seed=6)
        phi = TestFunction(GaussianBump(width=0.2), 0.0, 0.25)
        psi = TestFunction(GaussianBump(center=0.3, width=0.2), 0.0, 0.5)
        combined = pair_with_test_function(slab, lambda t, x: 2.0 * phi(t, x) - 0.5 * psi(t, x))
        separate = (2.0 * pair_with_test_function(slab, phi)
                    - 0.5 * pair_with_test_function(slab, psi))
        np.testing.assert_allclose(combined, separate, rtol=1e-9, atol=1e-12)

    def test_quadrature_is_symmetric(self):
        phi = TestFunction(GaussianBump(), 0.0, 1.0)
        psi = TestFunction(GaussianBump(center=0.7, width=0.5), 0.0, 1.0)
        forward = spectral_covariance_quadrature(phi, psi, 0.3)
        backward = spectral_covariance_quadrature(psi, phi, 0.3)
        assert forward == pytest.approx(backward, rel=1e-12)

    @pytest.mark.parametrize("center", [0.0, 1.0])
    def test_quadrature_matches_trapezoid(self, center):
        """c_H ∫ 2π e^{-ξ²} cos(cξ) |ξ|^{1-2H} dξ for unit bumps a distance c apart."""
        H = 0.3
        phi = TestFunction(GaussianBump(), 0.0, 1.0)
        psi = TestFunction(GaussianBump(center=center), 0.0, 1.0)
        xi = np.linspace(-12.0, 12.0, 400_001)
        integrand = (2.0 * math.pi * np.exp(-xi ** 2) * np.cos(center * xi)
                     * np.abs(xi) ** (1 - 2 * H))
        expected = riesz_constant(H) * np.trapezoid(integrand, xi)
        assert spectral_covariance_quadrature(phi, psi, H) == pytest.approx(expected, rel=1e-5)


class TestRefinedCovariance:

    def test_refined_run_reports_decaying_bias(self):
        grid = verification_grid(nx=256, nt=8)
        report = verify_noise_covariance(0.3, M=400, seed=1, grid=grid, min_paths=400,
                                         refine=True)
        for check in report.checks:
            assert check.refined_discrepancy is not None
            assert check.bias_decayed is not None
            assert abs(check.refined_discrepancy) <= 4 * check.stderr + 0.02 * abs(check.predicted)

    def test_unrefined_run_has_no_bias_trend(self):
        grid = verification_grid(nx=256, nt=8)
        report = verify_noise_covariance(0.3, M=400, seed=1, grid=grid, min_paths=400)
        assert all(c.bias_decayed is None for c in report.checks)
