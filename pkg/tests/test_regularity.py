"""
Tests for increment ladders, moment tables, exponent fits, the Kolmogorov report,
the uniform moment bound and the property-(P) integral.
"""

import math

import numpy as np
import pytest

from spde.errors import RefusalError, ValidationError
from spde.noise import SpaceTimeGrid
from spde.regularity import (ExponentFit, ExponentTarget, IncrementLadder, MomentRow,
                             MomentTable, estimate_increment_moments, estimate_moment_tables,
                             fit_exponent, gaussian_moment_ratio, gaussian_ratio_rows,
                             kolmogorov_report, make_ladder, monotonicity_violations,
                             path_increment_means, property_p_integral, ramp_row,
                             uniform_moment_bound)
from spde.kernels import increment_variance, kernel_spec

GRID = SpaceTimeGrid(L=2.0, nx=512, T=0.5, nt=64, L_obs=0.25)


def _power_table(exponent=0.3, p=2.0, scale=3.0, noise=None, seed=0):
    ladder = IncrementLadder("space", (8, 16, 32, 64, 128), 2.0 ** -10, p, 0.25)
    exact = scale * ladder.lags ** (p * exponent)
    if noise is None:
        rows = [MomentRow(float(h), float(m), 0.01 * float(m), 64, 100)
                for h, m in zip(ladder.lags, exact)]
        return MomentTable("space", p, "heat", 0.3, rows)
    rng = np.random.default_rng(seed)
    values = exact[None, :] * rng.lognormal(0.0, noise, size=(64, exact.size))
    return MomentTable.from_path_values(ladder, values, "heat", 0.3, [100] * exact.size)


def _fit(direction, p, exponent, width=0.02):
    return ExponentFit(direction=direction, p=p, slope=p * exponent, intercept=0.0,
                       slope_stderr=0.01, r_squared=0.99, exponent=exponent,
                       ci95=(exponent - width / 2, exponent + width / 2), n_points=6)


# heat at T = 0.5 on dx = 2^-9; the ramp leaves only the final row
_WIDE_LADDER = IncrementLadder("space", (64, 128, 256), 2.0 ** -9, 2.0, 0.5)


def _final_row_config(config_factory):
    return config_factory(grid={"L": 4.0, "nx": 4096, "T": 0.5, "nt": 8, "L_obs": 1.0},
                          regularity={"directions": ["space"], "ramp_fraction": 0.99})


class TestLadders:

    def test_geometric_when_dyadic_is_too_short(self):
        ladder = make_ladder("space", GRID, h0=0.25, n_lags=6)
        m = ladder.multiples
        assert m[0] == 8 and m[-1] == 32
        assert len(m) >= 4
        assert all(b > a for a, b in zip(m, m[1:]))

    def test_dyadic_when_range_allows(self):
        fine = SpaceTimeGrid(L=2.0, nx=4096, T=0.5, nt=64, L_obs=0.25)
        ladder = make_ladder("space", fine, h0=0.25)
        assert ladder.multiples == (8, 16, 32, 64, 128, 256)
        np.testing.assert_allclose(ladder.lags[-1], 0.25)

    def test_refuses_lags_below_resolution(self):
        with pytest.raises(RefusalError):
            make_ladder("space", GRID, h0=0.03)
        with pytest.raises(RefusalError):
            IncrementLadder("space", (4, 8, 16, 32), GRID.dx)

    def test_validates_p_and_h0(self):
        with pytest.raises(ValidationError):
            IncrementLadder("space", (8, 16, 32, 64), 1e-3, p=1.0)
        with pytest.raises(ValidationError):
            IncrementLadder("space", (8, 16, 32, 640), 1e-3, h0=0.25)

    def test_ramp(self):
        assert ramp_row(GRID, 0.125) == 8
        assert ramp_row(GRID, 0.0) == 0

    def test_linear_field_increments(self):
        u = np.tile(GRID.x, (GRID.nt + 1, 1))
        space = make_ladder("space", GRID, 0.25)
        np.testing.assert_allclose(path_increment_means(u, GRID, space, 8), space.lags ** 2)
        time = make_ladder("time", GRID, 0.25)
        np.testing.assert_array_equal(path_increment_means(u, GRID, time, 8), 0.0)


class TestFits:

    def test_exact_power_law(self):
        fit = fit_exponent(_power_table())
        assert fit.exponent == pytest.approx(0.3, abs=1e-10)
        assert fit.slope == pytest.approx(0.6, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.n_points == 5

    def test_bootstrap_interval_from_path_values(self):
        table = _power_table(noise=0.1)
        fit = fit_exponent(table, bootstrap_resamples=200, seed=3)
        assert fit.exponent == pytest.approx(0.3, abs=0.03)
        assert fit.ci95[0] < fit.ci95[1]
        assert fit.ci95[0] - 0.01 <= fit.exponent <= fit.ci95[1] + 0.01

    def test_refuses_short_table(self):
        table = _power_table()
        table.rows = table.rows[:3]
        with pytest.raises(RefusalError):
            fit_exponent(table)

    def test_refuses_non_positive_moment(self):
        table = _power_table()
        table.rows[2] = MomentRow(table.rows[2].h, 0.0, 0.0, 64, 100)
        with pytest.raises(RefusalError):
            fit_exponent(table)

    def test_refuses_singular_design(self):
        rows = [MomentRow(0.1, 1.0 + k, 0.1, 64, 100) for k in range(4)]
        with pytest.raises(RefusalError):
            fit_exponent(MomentTable("space", 2.0, "heat", 0.3, rows))

    def test_monotonicity(self):
        table = _power_table()
        assert monotonicity_violations(table) == []
        table.rows[3] = MomentRow(table.rows[3].h, table.rows[2].moment * 0.5, 1e-6, 64, 100)
        assert monotonicity_violations(table) == [table.rows[3].h]

    def test_gaussian_moment_ratio(self):
        assert gaussian_moment_ratio(2.0) == pytest.approx(1.0)
        assert gaussian_moment_ratio(4.0) == pytest.approx(3.0 ** 0.25)

    def test_constant_moments_give_zero_slope(self):
        ladder = IncrementLadder("space", (8, 16, 32, 64, 128), 2.0 ** -10, 2.0, 0.25)
        rows = [MomentRow(float(h), 5.0, 0.05, 64, 100) for h in ladder.lags]
        fit = fit_exponent(MomentTable("space", 2.0, "heat", 0.3, rows))
        assert fit.slope == pytest.approx(0.0, abs=1e-10)
        assert fit.exponent == pytest.approx(0.0, abs=1e-10)

    def test_interval_coverage_under_multiplicative_noise(self):
        """1% lognormal noise on an exact power law: the t interval covers the exponent."""
        ladder = IncrementLadder("space", (8, 16, 32, 64, 128), 2.0 ** -10, 2.0, 0.25)
        exact = 3.0 * ladder.lags ** 0.6
        rng = np.random.default_rng(2024)
        covered = 0
        for _ in range(1000):
            moments = exact * np.exp(0.01 * rng.standard_normal(exact.size))
            rows = [MomentRow(float(h), float(m), 0.01 * float(m), 64, 100)
                    for h, m in zip(ladder.lags, moments)]
            fit = fit_exponent(MomentTable("space", 2.0, "heat", 0.3, rows),
                               bootstrap_resamples=0)
            covered += fit.ci95[0] <= 0.3 <= fit.ci95[1]
        assert covered / 1000 >= 0.93


class TestKolmogorovReport:

    def test_targets(self):
        target = ExponentTarget.for_kernel(kernel_spec("heat", 0.3))
        assert (target.space_exponent, target.time_exponent) == (0.3, 0.15)

    def test_pass_and_consistency(self):
        target = ExponentTarget.for_kernel(kernel_spec("wave", 0.3))
        report = kolmogorov_report([_fit("space", 2.0, 0.30), _fit("space", 4.0, 0.31)],
                                   _fit("time", 2.0, 0.28), target)
        assert report.space.verdict == "PASS"
        assert report.space.consistency == "PASS"
        assert report.time.verdict == "PASS"
        assert report.status == "PASS"
        assert report.space_order_sup == pytest.approx(0.30)

    def test_fail_high_adds_note(self):
        target = ExponentTarget.for_kernel(kernel_spec("heat", 0.3))
        report = kolmogorov_report(_fit("space", 2.0, 0.3), _fit("time", 2.0, 0.5), target)
        assert report.time.verdict == "FAIL-HIGH"
        assert report.status == "FAIL"
        assert any("smoother" in n for n in report.notes)
        assert "FAIL-HIGH" in report.text()

    def test_direction_not_run(self):
        target = ExponentTarget.for_kernel(kernel_spec("heat", 0.3))
        report = kolmogorov_report(_fit("space", 2.0, 0.27), None, target)
        assert report.time.verdict == "NOT-RUN"
        assert report.status == "PASS"
        assert "not run" in report.text()

    def test_heavy_tail_note(self):
        target = ExponentTarget.for_kernel(kernel_spec("heat", 0.3))
        report = kolmogorov_report([_fit("space", 2.0, 0.3), _fit("space", 6.0, 0.3)], None,
                                   target)
        assert any("heavy-tailed" in n for n in report.notes)


class TestMonteCarloMoments:

    def test_refuses_too_few_paths(self, small_config):
        ladder = make_ladder("space", small_config.build_grid(), 0.25)
        with pytest.raises(RefusalError):
            estimate_increment_moments(small_config, ladder, M=8)

    def test_noise_trace_has_no_time_direction(self, config_factory):
        config = config_factory(regularity={"field_source": "noise_trace"})
        ladder = make_ladder("time", config.build_grid(), 0.25)
        with pytest.raises(ValidationError):
            estimate_increment_moments(config, ladder)

    def test_tables_from_one_sweep(self, small_config):
        grid = small_config.build_grid()
        ladders = [make_ladder("space", grid, 0.25), make_ladder("time", grid, 0.25)]
        tables = estimate_moment_tables(small_config, ladders)
        assert [t.direction for t in tables] == ["space", "time"]
        for table, ladder in zip(tables, ladders):
            assert len(table.rows) == len(ladder.multiples)
            assert table.path_values.shape == (16, len(ladder.multiples))
            assert np.all(table.moments > 0)
            assert all(r.n_paths == 16 for r in table.rows)

    def test_worker_count_does_not_change_results(self, small_config):
        ladder = make_ladder("space", small_config.build_grid(), 0.25)
        serial = estimate_increment_moments(small_config, ladder, M=24, workers=1)
        parallel = estimate_increment_moments(small_config, ladder, M=24, workers=3)
        np.testing.assert_array_equal(serial.path_values, parallel.path_values)

    def test_noise_trace_recovers_hurst_index(self, config_factory):
        config = config_factory(regularity={"field_source": "noise_trace",
                                            "directions": ["space"]})
        ladder = make_ladder("space", config.build_grid(), 0.25)
        table = estimate_increment_moments(config, ladder, M=32)
        fit = fit_exponent(table, bootstrap_resamples=0)
        assert fit.exponent == pytest.approx(0.3, abs=0.03)

    def test_heat_moments_match_gaussian_increment_variance(self, config_factory):
        config = _final_row_config(config_factory)
        table = estimate_increment_moments(config, _WIDE_LADDER, M=128)
        heat = kernel_spec("heat", 0.3)
        for row in table.rows:
            expected = increment_variance(heat, 0.5, row.h, 0.3, "space")
            assert abs(row.moment - expected) <= 3 * row.stderr + 0.03 * expected, row

    def test_fourth_moment_is_gaussian_consistent(self, config_factory):
        config = _final_row_config(config_factory)
        second, fourth = estimate_moment_tables(
            config, [_WIDE_LADDER, _WIDE_LADDER.with_p(4.0)], M=128)
        rows = gaussian_ratio_rows(fourth, second)
        assert [r.h for r in rows] == list(second.lags)
        for row in rows:
            assert row.expected == pytest.approx(3.0 ** 0.25)
            assert row.deviation <= 4.0, row
            assert row.ratio == pytest.approx(row.expected, rel=0.1)

    def test_ratio_needs_a_second_moment_reference(self, config_factory):
        config = _final_row_config(config_factory)
        second, fourth = estimate_moment_tables(
            config, [_WIDE_LADDER, _WIDE_LADDER.with_p(4.0)], M=16)
        with pytest.raises(ValidationError):
            gaussian_ratio_rows(second, fourth)
        with pytest.raises(ValidationError):
            gaussian_ratio_rows(fourth, _power_table())


class TestUniformBound:

    def test_zero_data_starts_at_zero(self, small_config):
        bound = uniform_moment_bound(small_config, p=2.0, M=4)
        assert len(bound.per_iterate) == small_config.solver.n_iters + 1
        assert bound.per_iterate[0] == 0.0
        assert bound.value > 0.0

    def test_worker_count_does_not_change_bound(self, config_factory):
        config = config_factory(solver={"a": 0.5})
        serial = uniform_moment_bound(config, M=16, workers=1)
        parallel = uniform_moment_bound(config, M=16, workers=2)
        assert serial.per_iterate == parallel.per_iterate


class TestPropertyP:

    def test_deterministic_constant_field_is_zero(self, config_factory):
        # wave keeps constant data exactly; nt=128 keeps dt <= dx on the refined grid
        config = config_factory(solver={"a": 0.0, "b": 0.0}, grid={"nt": 128},
                                kernels={"kind": "wave", "init_family": "constant",
                                         "init_c": 2.0})
        result = property_p_integral(config, M=2)
        assert result.value == 0.0
        assert result.drift == 0.0
        assert result.status == "FINITE"

    def test_gaussian_field_is_finite(self, small_config):
        result = property_p_integral(small_config, p=2.0, refine=False)
        assert math.isfinite(result.value) and result.value > 0
        assert result.near > 0 and result.far > 0
        assert result.t in (0.25, 0.5)
        assert abs(result.x) <= 0.25
        assert result.status == "FINITE"
        assert result.refined_value is None

    def test_refuses_single_path(self, small_config):
        with pytest.raises(RefusalError):
            property_p_integral(small_config, M=1)

    def test_refinement_reports_drift(self, small_config):
        result = property_p_integral(small_config, p=2.0, M=16)
        assert result.refined_value is not None and math.isfinite(result.refined_value)
        scale = max(abs(result.value), abs(result.refined_value))
        assert result.drift == pytest.approx(abs(result.refined_value - result.value) / scale)
        assert result.status == ("FINITE" if result.drift <= 0.05 else "FINITENESS-FAIL")
