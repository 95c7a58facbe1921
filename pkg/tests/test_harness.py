"""Tests for sweeps, rate fits and the numeric bound checks"""
import dataclasses
import math

import pytest

from hauslev.config import get_settings
from hauslev.exceptions import ContractError, RateFitError
from hauslev.models import ModelSpec, SweepPlan, SweepRow
from hauslev.services.estimator import evaluate_s_n, search_ceiling
from hauslev.services.harness import (
    default_reference_resolution,
    fit_rate,
    fit_resolution,
    rate_points,
    replication_seed,
    run_sweep,
    target_exponent,
    validate_model,
    verify_error_decomposition,
    verify_lemma_a1,
    verify_penalty_scaling,
    verify_vernier_bounds,
)
from hauslev.services.synth import make_model

N_GRID = [1000, 2000, 4000, 8000, 16000]


def power_law_rows(exponent, scale=2.0, method="adaptive", replications=1):
    rows = []
    for n in N_GRID:
        loss = scale * (n / math.log(n)) ** exponent
        for rep in range(replications):
            rows.append(SweepRow(
                n=n, rep=rep, method=method, j_hat=int(math.log2(n)) // 3,
                hausdorff=loss, symdiff=loss / 2, raster_bias=0.0, seconds=math.nan,
            ))
    return rows


def normalization_check(report):
    return next(c for c in report.checks if c.name == "normalization")


def small_plan(**overrides):
    values = dict(model=ModelSpec(), method="fixed-j", n_grid=[1024], j_fixed=3, j_ref=8)
    values.update(overrides)
    return SweepPlan(**values)


def acceptance_plan(method="adaptive", gamma=0.8, alpha=1.0, top=17, base_seed=0, jump_mode=False):
    """n = 2^10 .. 2^top, 50 replications each"""
    return SweepPlan(
        model=ModelSpec(gamma=gamma, alpha=alpha), method=method, n_grid=[2 ** k for k in range(10, top + 1)],
        replications=50, base_seed=base_seed, losses=["hausdorff"], jump_mode=jump_mode,
    )


class TestSeeds:
    def test_stable_and_distinct(self):
        assert replication_seed(0, 1024, 3) == replication_seed(0, 1024, 3)
        seeds = {replication_seed(0, n, rep) for n in (256, 512) for rep in range(10)}
        assert len(seeds) == 20
        assert replication_seed(1, 256, 0) != replication_seed(0, 256, 0)


class TestSweep:
    def test_single_run(self, interval_model):
        result = run_sweep(small_plan(), model=interval_model)
        assert len(result.rows) == 1
        row = result.rows[0]
        assert (row.n, row.rep, row.j_hat, row.method) == (1024, 0, 3, "fixed-j")
        assert row.hausdorff >= 0 and row.symdiff >= 0
        assert row.raster_bias == pytest.approx(2.0 ** -8)
        assert math.isnan(row.seconds)

    def test_rows_in_plan_order(self, interval_model):
        plan = small_plan(method="adaptive", n_grid=[256, 512], replications=3, j_fixed=None)
        result = run_sweep(plan, model=interval_model)
        assert [(r.n, r.rep) for r in result.rows] == [(n, rep) for n in (256, 512) for rep in range(3)]

    def test_deterministic(self, interval_model):
        plan = small_plan(method="adaptive", n_grid=[256, 512], replications=2, j_fixed=None, base_seed=5)
        key = lambda rows: [(r.n, r.rep, r.j_hat, r.hausdorff, r.symdiff) for r in rows]
        assert key(run_sweep(plan, model=interval_model).rows) == key(run_sweep(plan, model=interval_model).rows)

    def test_workers_do_not_change_results(self, interval_model):
        plan = small_plan(method="adaptive", n_grid=[256, 512], replications=2, j_fixed=None)
        key = lambda rows: [(r.n, r.rep, r.j_hat, r.hausdorff, r.symdiff) for r in rows]
        serial = run_sweep(plan, model=interval_model, workers=1)
        parallel = run_sweep(plan, model=interval_model, workers=2)
        assert key(serial.rows) == key(parallel.rows)

    def test_unrequested_losses_are_nan(self, interval_model):
        result = run_sweep(small_plan(losses=["hausdorff"]), model=interval_model)
        assert math.isnan(result.rows[0].symdiff)

    def test_timing_recorded_on_request(self, interval_model):
        result = run_sweep(small_plan(record_timing=True), model=interval_model)
        assert result.rows[0].seconds > 0

    def test_default_reference_resolution(self):
        assert default_reference_resolution(small_plan(j_ref=None)) == 6

    def test_reference_resolution_ignores_replications(self):
        plans = [small_plan(method="adaptive", j_fixed=None, j_ref=None, n_grid=[1024, 4096], replications=r)
                 for r in (1, 50)]
        ceiling = search_ceiling(4096, 1, evaluate_s_n(plans[0].s_n, 4096))
        assert [default_reference_resolution(p) for p in plans] == [ceiling + 3] * 2


class TestRateFit:
    def test_exact_power_law(self):
        fit = fit_rate(power_law_rows(-1 / 3), d=1, alpha=1.0)
        assert fit.slope == pytest.approx(-1 / 3, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(2.0), abs=1e-10)
        assert fit.target_exponent == pytest.approx(-1 / 3)

    def test_symdiff_quantity(self):
        fit = fit_rate(power_law_rows(-0.5), d=1, alpha=1.0, quantity="symdiff")
        assert fit.quantity == "symdiff"
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)

    def test_support_target_inferred(self):
        fit = fit_rate(power_law_rows(-0.5, method="support"), d=1, alpha=1.0)
        assert fit.target_exponent == pytest.approx(-0.5)
        assert target_exponent(2, 1.0) == pytest.approx(-0.25)

    def test_zero_losses_dropped(self):
        rows = power_law_rows(-1 / 3, replications=2)
        rows[0] = rows[0].model_copy(update={"hausdorff": 0.0})
        points = rate_points(rows)
        assert points[0].count == 1
        assert len(points) == len(N_GRID)

    def test_too_few_points(self):
        rows = [r for r in power_law_rows(-1 / 3) if r.n <= 4000]
        with pytest.raises(RateFitError):
            fit_rate(rows, d=1, alpha=1.0)

    def test_all_zero_sample_size_is_skipped(self):
        rows = power_law_rows(-1 / 3)
        rows[-1] = rows[-1].model_copy(update={"hausdorff": 0.0})
        rows[-2] = rows[-2].model_copy(update={"hausdorff": 0.0})
        with pytest.raises(RateFitError):
            fit_rate(rows, d=1, alpha=1.0)

    def test_resolution_fit(self):
        fit = fit_resolution(power_law_rows(-1 / 3), d=1, alpha=1.0)
        assert fit.quantity == "resolution"
        assert len(fit.points) == len(N_GRID)
        assert fit.slope < 0


class TestBoundChecks:
    def test_deviation_bound_is_loose(self, uniform_model):
        report = verify_lemma_a1(uniform_model, j_max=None, n=50, trials=40, delta=0.5)
        assert report.violation_rate <= 0.5
        assert report.passed

    def test_vernier_sandwich(self, interval_model):
        report = verify_vernier_bounds(interval_model, j_range=[0, 1, 2, 3])
        assert [row.j_prime for row in report.rows] == [3, 4, 5, 6]
        assert all(math.isnan(row.vernier_empirical) for row in report.rows)
        assert report.passed

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
    def test_vernier_sandwich_across_regularity(self, alpha):
        model = make_model(d=1, gamma=0.8, alpha=alpha, shape="interval")
        report = verify_vernier_bounds(model, j_range=range(7))
        for row in report.rows:
            assert row.sandwich_ok, row

    def test_penalty_lower_bound(self, interval_model):
        report = verify_penalty_scaling(interval_model, n=2000, j_range=[0, 2, 4, 6], trials=5)
        assert report.passed
        for row in report.rows:
            assert 0 < row.ratio_min <= row.ratio_max

    def test_decomposition_needs_regular_level(self, jump_model):
        with pytest.raises(ContractError):
            verify_error_decomposition(jump_model, [1, 2], n=500, trials=1)

    def test_decomposition_rows(self, interval_model):
        report = verify_error_decomposition(interval_model, [1, 2, 3], n=2000, trials=3)
        assert [row.j for row in report.rows] == [1, 2, 3]
        assert all(row.epsilon_mean > 0 for row in report.rows)


class TestValidateModel:
    def test_interval_passes(self, interval_model):
        report = validate_model(interval_model)
        assert report.passed
        assert [c.name for c in report.checks] == [
            "normalization", "density-range", "constants",
            "A1-lower-regularity", "A2-upper-regularity", "B-inner-cover",
        ]

    def test_uniform_warns_but_passes(self, uniform_model):
        report = validate_model(uniform_model)
        a1 = next(c for c in report.checks if c.name == "A1-lower-regularity")
        assert a1.warning
        assert report.passed

    def test_thin_ribbon_fails_inner_cover(self):
        report = validate_model(make_model(d=2, gamma=0.8, alpha=1.0, shape="ribbon"))
        cover = next(c for c in report.checks if c.name == "B-inner-cover")
        assert not cover.passed
        assert "inf" in cover.detail
        assert not report.passed

    @pytest.mark.parametrize("d", [2, 3])
    def test_normalization_gated_on_quadrature(self, d):
        model = make_model(d=d, gamma=0.5, alpha=2.0, shape="ball", radius=0.3)
        check = normalization_check(validate_model(model))
        bound = max(abs(model.normalization_residual), model.quadrature_error)
        tol = get_settings().quadrature_tol
        assert check.passed == (bound <= tol)
        assert check.warning == (1e-9 < bound <= tol)

    def test_coarse_ball_quadrature_is_reported(self):
        check = normalization_check(validate_model(make_model(d=3, gamma=0.5, alpha=2.0, shape="ball", radius=0.3)))
        assert check.warning or not check.passed

    @pytest.mark.parametrize("error, warning, passed", [
        (0.0, False, True),
        (1e-6, True, True),
        (1e-2, False, False),
    ])
    def test_normalization_tiers(self, interval_model, error, warning, passed):
        model = dataclasses.replace(interval_model, normalization_residual=0.0, quadrature_error=error)
        check = normalization_check(validate_model(model))
        assert (check.warning, check.passed) == (warning, passed)


@pytest.mark.slow
class TestMonteCarlo:
    def test_deviation_bound_holds(self, interval_model):
        report = verify_lemma_a1(interval_model, j_max=None, n=20_000, trials=200, delta=0.05, base_seed=1)
        assert report.passed

    def test_vernier_deviation(self, interval_model):
        report = verify_vernier_bounds(interval_model, j_range=[0, 1, 2, 3], n=20_000, trials=200, delta=0.05)
        assert report.passed

    @pytest.fixture(scope="class")
    def adaptive_rows(self, interval_model):
        return run_sweep(acceptance_plan(method="adaptive", base_seed=2024), model=interval_model).rows

    @pytest.fixture(scope="class")
    def oracle_rows(self, interval_model):
        return run_sweep(acceptance_plan(method="oracle", base_seed=2024), model=interval_model).rows

    def test_adaptive_tracks_oracle_rate(self, adaptive_rows, oracle_rows):
        for rows in (adaptive_rows, oracle_rows):
            fit = fit_rate(rows, d=1, alpha=1.0)
            assert abs(fit.slope - (-1 / 3)) <= 0.15
        oracle_means = {p.n: p.mean for p in rate_points(oracle_rows)}
        for point in rate_points(adaptive_rows):
            assert point.mean <= 3.0 * oracle_means[point.n]

    def test_resolution_shrinks_with_n(self, adaptive_rows):
        fit = fit_resolution(adaptive_rows, d=1, alpha=1.0)
        medians = [p.median for p in fit.points]
        assert all(later <= earlier for earlier, later in zip(medians, medians[1:]))
        assert abs(fit.slope - (-1 / 3)) <= 0.2

    def test_jump_rate(self, jump_model):
        jump = run_sweep(acceptance_plan(alpha=0.0, top=16, base_seed=7, jump_mode=True), model=jump_model).rows
        fit = fit_rate(jump, d=1, alpha=0.0)
        assert abs(fit.slope - (-1.0)) <= 0.3

        standard = run_sweep(acceptance_plan(alpha=0.0, top=16, base_seed=7), model=jump_model).rows
        finer = sum(a.j_hat >= b.j_hat for a, b in zip(jump, standard))
        assert finer >= 0.6 * len(jump)

    def test_support_rate(self):
        fit = fit_rate(run_sweep(acceptance_plan(method="support", gamma=0.0, top=16, base_seed=11)).rows, d=1, alpha=1.0)
        assert fit.target_exponent == pytest.approx(-0.5)
        assert abs(fit.slope - fit.target_exponent) <= 0.2
