"""
Monte Carlo experiments: convergence sweeps, rate fits and numeric checks of
the concentration and vernier bounds the estimator relies on.
"""
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from hauslev.config import get_settings
from hauslev.exceptions import ContractError, DomainError, HauslevError, RateFitError
from hauslev.logging_config import get_logger
from hauslev.models import (
    DecompositionReport,
    DecompositionRow,
    EstimatorConfig,
    LemmaA1Report,
    PenaltyScalingReport,
    PenaltyScalingRow,
    RateFit,
    RatePoint,
    SweepPlan,
    SweepRow,
    ValidationCheck,
    ValidationReport,
    VernierBoundRow,
    VernierBoundsReport,
)
from hauslev.services.estimator import (
    build_histogram,
    error_radius,
    estimate,
    evaluate_s_n,
    fine_resolution,
    oracle_resolution,
    penalty,
    plug_in_level_set,
    search_ceiling,
    support_resolution,
    vernier_empirical,
    vernier_true,
)
from hauslev.services.grid import (
    DENSE_TRANSFORM_LIMIT,
    DyadicGrid,
    GridSet,
    hausdorff,
    inner_cover_distance,
    symmetric_difference_measure,
)
from hauslev.services.synth import DensityModel, check_assumptions, model_from_spec, sample, true_level_set

logger = get_logger(__name__)

MIN_FIT_POINTS = 4
MIN_REPLICATIONS = 30
NORMALIZATION_TOL = 1e-9

# Reference resolution of the inner-cover check per dimension
INNER_COVER_LEVEL = {1: 6, 2: 5, 3: 4}


@dataclass
class SweepResult:
    """Rows of a sweep in (n, rep) order and the resolution of the reference raster"""

    plan: SweepPlan
    j_ref: int
    rows: List[SweepRow]


def replication_seed(base_seed: int, n: int, rep: int) -> int:
    """Seed of one (n, rep) run; independent of the other runs of the plan"""
    return int(np.random.SeedSequence([base_seed, n, rep]).generate_state(1)[0])


def default_reference_resolution(plan: SweepPlan) -> int:
    """
    Three levels finer than the finest resolution the plan's method can pick.

    Uses the search ceiling J rather than the largest observed j_hat, so rows
    stay identical when the replication count changes.
    """
    d = plan.model.d
    finest = 0
    for n in plan.n_grid:
        s_n = evaluate_s_n(plan.s_n, n)
        if plan.method == "fixed-j":
            j = plan.j_fixed
        elif plan.method == "oracle":
            j = oracle_resolution(n, d, plan.model.alpha, s_n)
        elif plan.method == "support":
            j = support_resolution(n, d, plan.model.alpha, s_n)
        else:
            j = search_ceiling(n, d, s_n)
        finest = max(finest, j)
    return finest + 3


def _run_replication(
    model: DensityModel,
    config: EstimatorConfig,
    truth: GridSet,
    plan: SweepPlan,
    task: Tuple[int, int]
) -> SweepRow:
    n, rep = task
    try:
        started = time.perf_counter()
        samples = sample(model, n, replication_seed(plan.base_seed, n, rep))
        estimate_set, diagnostics = estimate(samples, config)
        seconds = time.perf_counter() - started if plan.record_timing else math.nan
        return SweepRow(
            n=n,
            rep=rep,
            method=plan.method,
            j_hat=diagnostics.chosen_j,
            hausdorff=hausdorff(estimate_set, truth) if "hausdorff" in plan.losses else math.nan,
            symdiff=symmetric_difference_measure(estimate_set, truth) if "symdiff" in plan.losses else math.nan,
            raster_bias=math.sqrt(truth.d) * truth.grid.sidelength,
            seconds=seconds,
        )
    except HauslevError as e:
        raise e.with_context(f"n={n}, rep={rep}")


def run_sweep(plan: SweepPlan, model: Optional[DensityModel] = None, workers: Optional[int] = None) -> SweepResult:
    """
    Sample, estimate and score every (n, replication) pair of a plan.

    Replications run in worker processes when more than one worker is
    configured; rows come back in (n, rep) order either way.
    """
    model = model or model_from_spec(plan.model)
    j_ref = plan.j_ref if plan.j_ref is not None else default_reference_resolution(plan)
    truth = true_level_set(model, j_ref)
    config = plan.estimator_config()
    workers = workers or plan.workers or get_settings().workers
    tasks = [(n, rep) for n in plan.n_grid for rep in range(plan.replications)]
    run = partial(_run_replication, model, config, truth, plan)

    logger.info(
        f"Sweep: method={plan.method}, n_grid={plan.n_grid}, replications={plan.replications}, "
        f"j_ref={j_ref}, workers={workers}"
    )
    rows: List[SweepRow] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            for row in executor.map(run, tasks, chunksize=max(1, plan.replications // workers)):
                rows.append(row)
                _log_progress(row, plan)
    else:
        for task in tasks:
            row = run(task)
            rows.append(row)
            _log_progress(row, plan)
    return SweepResult(plan=plan, j_ref=j_ref, rows=rows)


def _log_progress(row: SweepRow, plan: SweepPlan) -> None:
    if row.rep == plan.replications - 1:
        logger.info(f"Finished n={row.n} ({plan.replications} replications)")


def _fit(points: List[RatePoint], quantity: str, target: float) -> RateFit:
    if len(points) < MIN_FIT_POINTS:
        raise RateFitError(
            f"{quantity} fit needs at least {MIN_FIT_POINTS} sample sizes with nonzero losses, got {len(points)}"
        )
    result = stats.linregress([p.x for p in points], [p.y for p in points])
    return RateFit(
        quantity=quantity,
        points=points,
        slope=float(result.slope),
        intercept=float(result.intercept),
        slope_stderr=float(result.stderr),
        target_exponent=target,
    )


def _log_ratio(n: int) -> float:
    return math.log(n / math.log(n))


def target_exponent(d: int, alpha: float, support: bool = False) -> float:
    """-1/(d + 2 alpha) for level sets, -1/(d + alpha) for supports"""
    return -1.0 / (d + alpha) if support else -1.0 / (d + 2.0 * alpha)


def _by_n(rows: Iterable[SweepRow]) -> dict:
    grouped: dict = {}
    for row in rows:
        grouped.setdefault(row.n, []).append(row)
    return dict(sorted(grouped.items()))


def rate_points(rows: Sequence[SweepRow], quantity: str = "hausdorff") -> List[RatePoint]:
    """Per-n mean and median of a loss; zero and missing losses are dropped"""
    points = []
    for n, group in _by_n(rows).items():
        values = np.array([getattr(row, quantity) for row in group], dtype=float)
        values = values[np.isfinite(values)]
        zeros = int(np.count_nonzero(values == 0))
        if zeros:
            logger.warning(f"n={n}: dropping {zeros} runs with zero {quantity}")
            values = values[values > 0]
        if values.size == 0:
            continue
        if values.size < MIN_REPLICATIONS:
            logger.warning(f"n={n}: only {values.size} runs feed the {quantity} mean (at least {MIN_REPLICATIONS} advised)")
        mean = float(values.mean())
        points.append(RatePoint(
            n=n, x=_log_ratio(n), y=math.log(mean), mean=mean, median=float(np.median(values)), count=int(values.size)
        ))
    return points


def fit_rate(
    rows: Sequence[SweepRow],
    d: int,
    alpha: float,
    quantity: str = "hausdorff",
    support: Optional[bool] = None
) -> RateFit:
    """
    OLS of ln(mean loss) on ln(n / ln n).

    The target exponent is that of support sets when every row comes from
    the support method, unless `support` says otherwise.

    Raises:
        RateFitError: fewer than four sample sizes survive
    """
    if support is None:
        support = bool(rows) and all(row.method == "support" for row in rows)
    return _fit(rate_points(rows, quantity), quantity, target_exponent(d, alpha, support))


def fit_resolution(rows: Sequence[SweepRow], d: int, alpha: float) -> RateFit:
    """OLS of ln(median 2^-j_hat) on ln(n / ln n)"""
    points = []
    for n, group in _by_n(rows).items():
        widths = np.array([2.0 ** -row.j_hat for row in group])
        median = float(np.median(widths))
        points.append(RatePoint(
            n=n, x=_log_ratio(n), y=math.log(median), mean=float(widths.mean()), median=median, count=len(group)
        ))
    return _fit(points, "resolution", target_exponent(d, alpha))


def _trial_samples(model: DensityModel, n: int, trials: int, base_seed: int):
    for trial in range(trials):
        yield sample(model, n, replication_seed(base_seed, n, trial))


def verify_lemma_a1(
    model: DensityModel,
    j_max: Optional[int],
    n: int,
    trials: int,
    delta: float,
    base_seed: int = 0,
    slack: float = 0.03
) -> LemmaA1Report:
    """
    Fraction of trials where some cell at some j <= j_max has |fbar - fhat| > Psi_j.

    j_max defaults to the search ceiling J of the default s_n rule.
    """
    if j_max is None:
        j_max = search_ceiling(n, model.d, evaluate_s_n("loglog", n))
    averages = [model.cell_averages(j) for j in range(j_max + 1)]
    violations = 0
    for samples in _trial_samples(model, n, trials, base_seed):
        finest = build_histogram(samples, j_max)
        for j in range(j_max + 1):
            h = finest.coarsen(j_max - j)
            if np.max(np.abs(averages[j] - h.dense_densities())) > penalty(h, delta):
                violations += 1
                break
    rate = violations / trials
    logger.info(f"Deviation bound: {violations}/{trials} violating trials (n={n}, J={j_max}, delta={delta})")
    return LemmaA1Report(
        n=n, j_max=j_max, trials=trials, delta=delta, violations=violations,
        violation_rate=rate, slack=slack, passed=rate <= delta + slack,
    )


def _upper_constant(model: DensityModel) -> float:
    """C = max(C2, f_max / delta2^alpha)"""
    c = model.constants
    return max(c.c2, model.f_max / c.delta2 ** model.alpha)


def verify_vernier_bounds(
    model: DensityModel,
    j_range: Sequence[int],
    n: int = 10_000,
    trials: int = 0,
    delta: float = 0.05,
    s_n: float = 8.0,
    base_seed: int = 0,
    rtol: float = 1e-9
) -> VernierBoundsReport:
    """
    Population vernier against its two-sided bound, and |V - Vhat| <= Psi_j' over trials.

    With the default s_n = 8 the vernier looks three levels finer.
    """
    c = model.constants
    big_c = _upper_constant(model)
    gamma, alpha, d = model.gamma, model.alpha, model.d
    plan = [(j, fine_resolution(j, s_n)) for j in j_range]
    populations = {j: vernier_true(model, j, gamma, jp) for j, jp in plan}

    ok_counts = {j: 0 for j, _ in plan}
    empirical = {j: [] for j, _ in plan}
    penalties = {j: [] for j, _ in plan}
    failed_trials = 0
    for samples in _trial_samples(model, n, trials, base_seed):
        finest = build_histogram(samples, max(jp for _, jp in plan))
        trial_ok = True
        for j, jp in plan:
            h = finest.coarsen(finest.j - jp)
            v_hat, psi = vernier_empirical(h, j, gamma), penalty(h, delta)
            empirical[j].append(v_hat)
            penalties[j].append(psi)
            if abs(populations[j] - v_hat) <= psi:
                ok_counts[j] += 1
            else:
                trial_ok = False
        failed_trials += not trial_ok

    rows = []
    for j, jp in plan:
        lower = min(c.delta1, c.c1) * 2.0 ** (-jp * alpha)
        upper = big_c * (math.sqrt(d) * 2.0 ** -j) ** alpha
        value = populations[j]
        ok = lower <= value * (1 + rtol) and value <= upper * (1 + rtol)
        rows.append(VernierBoundRow(
            j=j, j_prime=jp, vernier_true=value,
            vernier_empirical=float(np.mean(empirical[j])) if trials else math.nan,
            penalty=float(np.mean(penalties[j])) if trials else math.nan,
            lower_bound=lower, upper_bound=upper, sandwich_ok=ok,
            deviation_ok_fraction=ok_counts[j] / trials if trials else 1.0,
        ))
        logger.debug(f"j={j} j'={jp}: {lower:.4g} <= V={value:.4g} <= {upper:.4g} ({'ok' if ok else 'FAIL'})")

    rate = failed_trials / trials if trials else 0.0
    return VernierBoundsReport(
        n=n, trials=trials, delta=delta, rows=rows, deviation_violation_rate=rate,
        passed=all(row.sandwich_ok for row in rows) and rate <= delta,
    )


def verify_penalty_scaling(
    model: DensityModel,
    n: int,
    j_range: Sequence[int],
    trials: int,
    base_seed: int = 0
) -> PenaltyScalingReport:
    """
    Psi_j / sqrt(2^(jd) ln n / n) across trials at delta = 1/n, and the
    lower bound Psi_j >= sqrt(2^(jd) 8 ln(16 n) / n) on every trial.
    """
    d = model.d
    delta = 1.0 / n
    ratios = {j: [] for j in j_range}
    bound_ok = {j: True for j in j_range}
    for samples in _trial_samples(model, n, trials, base_seed):
        finest = build_histogram(samples, max(j_range))
        for j in j_range:
            psi = penalty(finest.coarsen(finest.j - j), delta)
            ratios[j].append(psi / math.sqrt(2.0 ** (j * d) * math.log(n) / n))
            floor = math.sqrt(2.0 ** (j * d) * 8.0 * math.log(16.0 * n) / n)
            bound_ok[j] = bound_ok[j] and psi >= floor * (1 - 1e-12)
    rows = [
        PenaltyScalingRow(j=j, ratio_min=min(ratios[j]), ratio_max=max(ratios[j]), lower_bound_ok=bound_ok[j])
        for j in j_range
    ]
    return PenaltyScalingReport(n=n, trials=trials, rows=rows, passed=all(bound_ok.values()))


def verify_error_decomposition(
    model: DensityModel,
    j_range: Sequence[int],
    n: int,
    trials: int,
    base_seed: int = 0
) -> DecompositionReport:
    """
    How often a cell of the plug-in error at j lies farther than epsilon_j
    from the level set boundary (delta = 1/n).
    """
    if model.alpha <= 0 or model.gamma <= 0:
        raise ContractError("error decomposition needs alpha > 0 and gamma > 0")
    delta = 1.0 / n
    truths = {j: true_level_set(model, j) for j in j_range}
    epsilons = {j: [] for j in j_range}
    distances = {j: [] for j in j_range}
    violations = {j: 0 for j in j_range}

    for samples in _trial_samples(model, n, trials, base_seed):
        finest = build_histogram(samples, max(j_range))
        for j in j_range:
            h = finest.coarsen(finest.j - j)
            eps = error_radius(penalty(h, delta), model.constants.c1, model.alpha, model.d, j)
            estimate_set = plug_in_level_set(h, model.gamma)
            flat = np.setxor1d(estimate_set.flat(), truths[j].flat(), assume_unique=True)
            if flat.size:
                centers = h.grid.centers(h.grid.unravel(flat))
                if np.max(np.abs(model.signed_distance(centers))) > eps:
                    violations[j] += 1
            epsilons[j].append(eps)
            distances[j].append(hausdorff(estimate_set, truths[j]))

    rows = [
        DecompositionRow(
            j=j,
            epsilon_mean=float(np.mean(epsilons[j])),
            hausdorff_mean=float(np.mean(distances[j])),
            violation_rate=violations[j] / trials,
        )
        for j in j_range
    ]
    return DecompositionReport(n=n, trials=trials, rows=rows)


def validate_model(model: DensityModel) -> ValidationReport:
    """Normalization, density range, regularity and inner-cover checks of a model"""
    checks: List[ValidationCheck] = []
    c = model.constants

    checks.append(_normalization_check(model))

    grid_check = check_assumptions(model)
    checks.append(ValidationCheck(
        name="density-range",
        passed=grid_check.f_min >= 0.0 and grid_check.f_max <= model.f_max * (1 + 1e-12),
        detail=f"f in [{grid_check.f_min:.6g}, {grid_check.f_max:.6g}] on 2^{grid_check.level} per axis, f_max={model.f_max:.6g}",
    ))
    checks.append(ValidationCheck(
        name="constants",
        passed=True,
        detail=(
            f"C1={c.c1:.6g} C2={c.c2:.6g} delta1={c.delta1:.6g} delta2={c.delta2:.6g} "
            f"x0={tuple(round(v, 6) for v in c.x0)} epsilon_o={c.epsilon_o:.6g}"
        ),
    ))
    checks.append(ValidationCheck(
        name="A1-lower-regularity",
        passed=grid_check.a1_passed,
        detail=(
            "vacuous: the density is flat at the level" if grid_check.vacuous
            else f"{grid_check.a1_points} points near the level, worst |f-gamma| / (C1 rho^alpha) = {grid_check.a1_worst_ratio:.6g}"
        ),
        warning=grid_check.vacuous,
    ))
    checks.append(ValidationCheck(
        name="A2-upper-regularity",
        passed=grid_check.a2_passed,
        detail=f"{grid_check.a2_points} points in B(x0, delta2), worst |f-gamma| / (C2 rho^alpha) = {grid_check.a2_worst_ratio:.6g}",
    ))
    checks.append(_inner_cover_check(model))

    for check in checks:
        if check.warning:
            logger.warning(f"{check.name}: {check.detail}")
    passed = all(check.passed for check in checks if not check.warning)
    return ValidationReport(
        shape=model.shape, d=model.d, gamma=model.gamma, alpha=model.alpha, checks=checks, passed=passed
    )


def _normalization_check(model: DensityModel) -> ValidationCheck:
    """
    Integral of f against the larger of the solver residual and the
    half-panel quadrature error estimate.

    Within NORMALIZATION_TOL passes; within quadrature_tol warns; beyond fails.
    """
    bound = max(abs(model.normalization_residual), model.quadrature_error)
    detail = (
        f"integral residual {model.normalization_residual:.3e}, "
        f"quadrature error estimate {model.quadrature_error:.3e}"
    )
    if bound <= NORMALIZATION_TOL:
        return ValidationCheck(name="normalization", passed=True, detail=detail)
    tol = get_settings().quadrature_tol
    if bound <= tol:
        return ValidationCheck(
            name="normalization", passed=True, warning=True,
            detail=f"{detail}; integral only known to {bound:.1e}, above {NORMALIZATION_TOL:.0e}",
        )
    return ValidationCheck(name="normalization", passed=False, detail=f"{detail}; above quadrature_tol {tol:.1e}")


def _inner_cover_level(model: DensityModel) -> int:
    """Base level per dimension, refined until 2h fits in the thinnest component, within the dense limit"""
    level = INNER_COVER_LEVEL[model.d]
    epsilon_o = model.constants.epsilon_o
    if epsilon_o > 0:
        level = max(level, math.ceil(math.log2(1.0 / epsilon_o)) + 1)
    return min(level, int(math.log2(DENSE_TRANSFORM_LIMIT)) // model.d)


def _inner_cover_check(model: DensityModel) -> ValidationCheck:
    """Inner-cover distance at epsilon in {2h, 4h, 8h} up to the model's inradius; C3 surrogate = distance / epsilon"""
    level = _inner_cover_level(model)
    h = DyadicGrid(model.d, level).sidelength
    truth = true_level_set(model, level)
    epsilons = [e for e in (2 * h, 4 * h, 8 * h) if e == 2 * h or e <= model.constants.epsilon_o]
    parts = []
    worst = 0.0
    try:
        for eps in epsilons:
            distance = inner_cover_distance(truth, eps)
            parts.append(f"eps={eps:.6g}: {distance:.6g}")
            worst = max(worst, distance / eps)
    except DomainError as e:
        return ValidationCheck(name="B-inner-cover", passed=False, detail=f"j={level}: {e.message}")
    detail = f"j={level}: " + ", ".join(parts) + f"; C3 surrogate {worst:.6g}"
    return ValidationCheck(name="B-inner-cover", passed=math.isfinite(worst), detail=detail)
