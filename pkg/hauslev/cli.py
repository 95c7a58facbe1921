"""
Command-line interface.

Usage:
    python run.py sample --model interval --alpha 1 --n 1000 --seed 7
    python run.py estimate --samples data/example_samples.csv --out runs/example
    python run.py hausdorff a.json b.json
    python run.py sweep data/smoke_plan.conf
    python run.py validate --config data/interval_alpha1.conf
    python run.py serve --dev
"""
import argparse
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from hauslev.config import RunConfig, get_settings, load_config_file, resolve_run_config, write_resolved_config
from hauslev.exceptions import ConfigError, HauslevError, RateFitError, UsageError, ValidationFailure
from hauslev.formats import (
    format_float,
    read_gridset,
    read_samples,
    write_diagnostics,
    write_gridset,
    write_rate,
    write_samples,
    write_sweep_csv,
    write_tsv,
)
from hauslev.logging_config import get_logger, setup_logging
from hauslev.models import RateFit
from hauslev.services.estimator import estimate
from hauslev.services.grid import hausdorff
from hauslev.services.harness import (
    fit_rate,
    fit_resolution,
    rate_points,
    run_sweep,
    target_exponent,
    validate_model,
)
from hauslev.services.synth import model_from_spec, sample

logger = get_logger(__name__)

# argparse dest -> RunConfig key
_OVERRIDES = (
    "model", "d", "gamma", "alpha", "center", "radius", "width", "r_cap",
    "n", "seed", "delta", "s_n", "jump_mode", "j", "j_max",
    "method", "n_grid", "replications", "base_seed", "losses", "j_ref", "workers", "record_timing",
    "samples", "out",
)


class _ArgumentParser(argparse.ArgumentParser):
    """Parser whose usage errors become UsageError (exit code 1)"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _common_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="key = value run configuration file")
    parent.add_argument("--out", help="Output directory (default: settings output_dir)")
    parent.add_argument("--log-level", help="Logging level (default: settings log_level)")
    parent.add_argument("--log-file", help="Also log to this file")
    return parent


def _model_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("model")
    group.add_argument("--model", help="Shape: interval, ball, two-component, ribbon, uniform")
    group.add_argument("--d", type=int, help="Dimension (1-3)")
    group.add_argument("--gamma", type=float, help="Level; 0 selects support-set estimation")
    group.add_argument("--alpha", type=float, help="Regularity (model) / known regularity (estimate)")
    group.add_argument("--center", help="Comma-separated center coordinates")
    group.add_argument("--radius", type=float)
    group.add_argument("--width", type=float)
    group.add_argument("--r-cap", dest="r_cap", type=float)
    group.add_argument("--seed", type=int)
    return parent


def _estimator_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("estimator")
    group.add_argument("--delta", type=float, help="Confidence parameter (default 1/n)")
    group.add_argument("--s-n", dest="s_n", help="'loglog', 'log' or a value >= 2")
    group.add_argument("--jump-mode", dest="jump_mode", action="store_true", default=None,
                       help="Scale vernier and penalty by 2^(-j'/2)")
    group.add_argument("--j", type=int, help="Fixed resolution, no selection")
    group.add_argument("--j-max", dest="j_max", type=int, help="Override the search ceiling J")
    return parent


def build_parser() -> argparse.ArgumentParser:
    common, model, estimator = _common_options(), _model_options(), _estimator_options()
    parser = _ArgumentParser(prog="hauslev", description="Hausdorff-accurate density level set estimation")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = commands.add_parser("sample", parents=[common, model], help="Draw samples from a synthetic model")
    p.add_argument("--n", type=_positive_int, help="Number of samples")
    p.set_defaults(handler=cmd_sample)

    p = commands.add_parser("estimate", parents=[common, model, estimator], help="Estimate a level set from samples")
    p.add_argument("--samples", help="Sample CSV file")
    p.set_defaults(handler=cmd_estimate)

    p = commands.add_parser("hausdorff", parents=[common], help="Hausdorff distance between two grid set files")
    p.add_argument("set_a")
    p.add_argument("set_b")
    p.set_defaults(handler=cmd_hausdorff)

    p = commands.add_parser("sweep", parents=[common, model, estimator], help="Monte Carlo convergence sweep")
    p.add_argument("plan", nargs="?", help="Plan file (same format as --config)")
    p.add_argument("--method", help="adaptive, oracle, fixed-j or support")
    p.add_argument("--n-grid", dest="n_grid", help="Comma-separated, strictly increasing sample sizes")
    p.add_argument("--replications", type=_positive_int)
    p.add_argument("--base-seed", dest="base_seed", type=int)
    p.add_argument("--losses", help="Comma-separated: hausdorff, symdiff")
    p.add_argument("--j-ref", dest="j_ref", type=int, help="Resolution of the reference raster")
    p.add_argument("--workers", type=_positive_int, help="Worker processes for replications")
    p.add_argument("--record-timing", dest="record_timing", action="store_true", default=None)
    p.set_defaults(handler=cmd_sweep)

    p = commands.add_parser("validate", parents=[common, model], help="Check a model's assumptions")
    p.set_defaults(handler=cmd_validate)

    p = commands.add_parser("serve", parents=[common], help="Run the HTTP API")
    p.add_argument("--dev", action="store_true", help="Run in development mode with auto-reload")
    p.add_argument("--debug", action="store_true", help="Run in debug mode with auto-reload and verbose logging")
    p.add_argument("--host", default="0.0.0.0", help="Host to bind to (default: 0.0.0.0)")
    p.add_argument("--port", type=int, default=8000, help="Port to bind to (default: 8000)")
    p.add_argument("--workers", type=_positive_int, default=1, help="Number of worker processes (default: 1)")
    p.set_defaults(handler=cmd_serve)
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    """Config file values overlaid by the flags given on the command line"""
    path = getattr(args, "plan", None) or args.config
    file_values = load_config_file(path) if path else {}
    overrides: Dict[str, Any] = {key: getattr(args, key, None) for key in _OVERRIDES}
    return resolve_run_config(file_values, overrides)


def _out_dir(config: RunConfig) -> Path:
    return Path(config.out or get_settings().output_dir)


def cmd_sample(args: argparse.Namespace) -> int:
    config = resolve(args)
    if config.n is None:
        raise ConfigError("sample needs n")
    out = _out_dir(config)
    model = model_from_spec(config.model_spec())
    samples = sample(model, config.n, config.seed)
    path = write_samples(out / "samples.csv", samples)
    write_resolved_config(config.model_copy(update={"out": str(out)}), out)
    print(f"n={samples.n} acceptance_rate={samples.acceptance_rate:.6f} seed={samples.seed}")
    print(f"samples: {path}")
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    config = resolve(args)
    if config.samples is None:
        raise ConfigError("estimate needs a sample file (--samples)")
    out = _out_dir(config)
    samples = read_samples(config.samples)
    estimator_config = config.estimator_config().model_copy(update={"cell_budget": get_settings().cell_budget})
    estimate_set, diagnostics = estimate(samples, estimator_config)

    set_path = write_gridset(out / "estimate.json", estimate_set)
    diag_path = write_diagnostics(out / "diagnostics.json", diagnostics)
    write_resolved_config(config.model_copy(update={"out": str(out), "delta": diagnostics.delta}), out)
    print(f"chosen_j={diagnostics.chosen_j} mode={diagnostics.mode} cells={len(estimate_set)}")
    print(f"estimate: {set_path}")
    print(f"diagnostics: {diag_path}")
    return 0


def cmd_hausdorff(args: argparse.Namespace) -> int:
    distance = hausdorff(read_gridset(args.set_a), read_gridset(args.set_b))
    print(format_float(distance))
    return 0


def _rate_or_placeholder(rows, d: int, alpha: float, quantity: str) -> RateFit:
    support = bool(rows) and rows[0].method == "support"
    try:
        return fit_rate(rows, d, alpha, quantity=quantity, support=support)
    except RateFitError as e:
        logger.warning(f"{quantity} rate not fitted: {e.message}")
        return RateFit(
            quantity=quantity,
            points=rate_points(rows, quantity),
            target_exponent=target_exponent(d, alpha, support),
            error=e.message,
        )


def cmd_sweep(args: argparse.Namespace) -> int:
    config = resolve(args)
    plan = config.sweep_plan()
    out = _out_dir(config)
    result = run_sweep(plan)
    d, alpha = plan.model.d, plan.model.alpha

    write_sweep_csv(out / "sweep.csv", result.rows)
    for quantity in plan.losses:
        fit = _rate_or_placeholder(result.rows, d, alpha, quantity)
        write_rate(out / f"rate_{quantity}.json", fit)
        write_tsv(out / f"rate_{quantity}.tsv", [p.x for p in fit.points], [p.y for p in fit.points],
                  header=("ln(n/ln n)", f"ln mean {quantity}"))
        if fit.slope is not None:
            print(f"{quantity}: slope={fit.slope:.4f} +/- {fit.slope_stderr:.4f} target={fit.target_exponent:.4f}")
        else:
            print(f"{quantity}: not fitted ({fit.error}) target={fit.target_exponent:.4f}")

    try:
        resolution = fit_resolution(result.rows, d, alpha)
        points = resolution.points
        write_rate(out / "rate_resolution.json", resolution)
    except RateFitError as e:
        logger.warning(f"resolution rate not fitted: {e.message}")
        points = []
    write_tsv(out / "resolution.tsv", [p.x for p in points], [p.y for p in points],
              header=("ln(n/ln n)", "ln median 2^-j_hat"))

    write_resolved_config(config.model_copy(update={"out": str(out), "j_ref": result.j_ref}), out)
    print(f"rows={len(result.rows)} j_ref={result.j_ref}")
    print(f"results: {out / 'sweep.csv'}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    config = resolve(args)
    out = _out_dir(config)
    model = model_from_spec(config.model_spec())
    report = validate_model(model)

    for check in report.checks:
        status = "WARN" if check.warning else ("PASS" if check.passed else "FAIL")
        print(f"{status} {check.name}: {check.detail}")
    (out / "validation.json").parent.mkdir(parents=True, exist_ok=True)
    (out / "validation.json").write_text(report.model_dump_json(indent=2) + "\n")
    write_resolved_config(config.model_copy(update={"out": str(out), "alpha": model.alpha}), out)

    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed and not c.warning]
        raise ValidationFailure(f"model failed: {', '.join(failed)}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    if args.dev or args.debug:
        print(f"Starting in {'DEBUG' if args.debug else 'DEVELOPMENT'} mode on http://{args.host}:{args.port}")
        uvicorn.run(
            "hauslev.main:app",
            host=args.host,
            port=args.port,
            reload=True,
            log_level="debug" if args.debug else "info"
        )
    else:
        print(f"Starting on http://{args.host}:{args.port} with {args.workers} worker(s)")
        uvicorn.run(
            "hauslev.main:app",
            host=args.host,
            port=args.port,
            workers=args.workers,
            log_level="info"
        )
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except SystemExit as e:
        return int(e.code or 0)

    settings = get_settings()
    setup_logging(args.log_level or settings.log_level, args.log_file or settings.log_file or None)
    try:
        return args.handler(args)
    except HauslevError as e:
        logger.error(e.message)
        print(f"error: {e.message}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception:
        logger.exception("Unexpected error")
        return 1
