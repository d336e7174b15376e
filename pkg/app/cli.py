"""
Command-line entry point: python -m app <command> [options].

Global flags come before the command:
  python -m app --seed 1 --out results simulate --kind fgn --n 1000 --h 0.7
  python -m app --threads 4 --out results table --id table1 --n 500 --reps 200
  python -m app --out results pipeline --x-file uk.csv --y-file jp.csv

Exit status is 0 on success, 2 when the lack-of-fit test is inapplicable
(degenerate residuals or variance function) and 1 for any other error.
"""

import argparse
import logging
import platform
import sys
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
import scipy

from app.config import settings
from app.models.data_models import Basis, ExperimentConfig, PipelineOptions
from app.services.artifact_io import emit, read_series, to_json, write_frame, write_series, write_table
from app.services.exceptions import DegenerateTestError, LMRegressionError
from app.services.fx_ingestion import FxIngestionService, ingest_fx, qq_data
from app.services.goodness_of_fit import check_nondegenerate_residuals, dn_test, knot_frame, loo_variance
from app.services.kernel_variance import evaluation_grid, get_kernel, sigma2_grid
from app.services.limit_laws import default_block_len, kappa2_block_bootstrap, kappa2_summands, sample_z2
from app.services.lm_simulation import gen_farima_ma, gen_fgn
from app.services.monte_carlo import (
    run_ase_table,
    run_correlation_checks,
    run_limit_comparison,
    run_rate_check,
    run_size_check,
    run_table1,
    run_table2,
)
from app.services.random_streams import fresh_seed
from app.services.regression import as_paired_arrays, fit_lse
from app.services.service_manager import get_service_manager_sync
from app.services.whittle import local_whittle

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DEGENERATE = 2


def build_provenance() -> str:
    return (
        f"{settings.app_name} {settings.app_version} "
        f"(python {platform.python_version()}, numpy {np.__version__}, "
        f"scipy {scipy.__version__}, pandas {pd.__version__})"
    )


def _seed(args: argparse.Namespace) -> int:
    if args.seed is not None:
        return args.seed
    if settings.default_seed is not None:
        return settings.default_seed
    seed = fresh_seed()
    logger.info(f"No seed given, using {seed}")
    return seed


def _print(payload: Any) -> None:
    sys.stdout.write(to_json(payload))


def _load_pair(args: argparse.Namespace):
    return as_paired_arrays(read_series(args.x).values, read_series(args.y).values)


def _basis(args: argparse.Namespace) -> Basis:
    return Basis(kind=args.basis, degree=args.degree)


def cmd_simulate(args: argparse.Namespace) -> int:
    seed = _seed(args)
    if args.kind == "fgn":
        series = gen_fgn(args.n, args.h, mu=args.mu, gamma=args.gamma, seed=seed)
    else:
        series = gen_farima_ma(args.n, args.H, seed=seed, burn_in=args.burn_in)
    path = write_series(f"{args.out}/{args.kind}.csv", series) if args.out else None
    _print({"kind": series.kind, "n": series.n, "seed": seed, "params": series.params, "path": path})
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    x, y = _load_pair(args)
    fit = fit_lse(x, y, _basis(args))
    frame = pd.DataFrame({"x": x, "residual": fit.residuals})
    emit(fit.summary(), args.out, "fit", args.format, frame)
    _print(fit.summary())
    return EXIT_OK


def cmd_variance(args: argparse.Namespace) -> int:
    x, y = _load_pair(args)
    fit = fit_lse(x, y)
    grid = evaluation_grid(args.lo, args.hi, args.step)
    b = args.C * x.size ** (-args.delta)
    values = sigma2_grid(grid, x, fit.residuals, b, get_kernel(args.kernel), args.estimator)
    frame = pd.DataFrame({"x": grid, "sigma2_hat": values})
    payload = {"b": b, "kernel": args.kernel, "estimator": args.estimator, "x": grid, "sigma2_hat": values}
    emit(payload, args.out, "variance", args.format, frame)
    _print({"b": b, "points": int(grid.size), "min": float(values.min()), "max": float(values.max())})
    return EXIT_OK


def cmd_whittle(args: argparse.Namespace) -> int:
    series = read_series(args.series)
    bracket = None
    if args.a1 is not None or args.a2 is not None:
        bracket = (
            settings.whittle_a1 if args.a1 is None else args.a1,
            settings.whittle_a2 if args.a2 is None else args.a2,
        )
    result = local_whittle(series, m=args.m, bracket=bracket)
    emit(result.to_cli_json(), args.out, "whittle", "json")
    _print(result.to_cli_json())
    return EXIT_OK


def cmd_goftest(args: argparse.Namespace) -> int:
    x, y = _load_pair(args)
    basis = _basis(args)
    fit = fit_lse(x, y, basis)
    check_nondegenerate_residuals(y, fit)
    loo = loo_variance(x, fit.residuals, args.C * x.size ** (-args.delta), get_kernel(args.kernel))
    standardized = np.divide(fit.residuals, loo.V, out=np.zeros_like(fit.residuals), where=loo.V > 0)
    whittle = local_whittle(standardized, m=args.m)
    result = dn_test(x, y, fit, whittle, loo, basis, args.alpha)
    emit(result.to_cli_json(), args.out, "goftest", "json")
    if args.out:
        write_frame(f"{args.out}/knots.csv", knot_frame(x, y, fit, loo, basis))
    _print(result.to_cli_json())
    return EXIT_OK


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    fields: Dict[str, Any] = {
        "n": args.n,
        "reps": args.reps,
        "master_seed": args.seed if args.seed is not None else ExperimentConfig().master_seed,
        "workers": args.threads,
        "kernel": args.kernel,
        "estimator": args.estimator,
        "whittle_residuals": args.whittle_residuals,
    }
    if args.H_grid:
        fields["H_grid"] = args.H_grid
    if args.h_grid:
        fields["h_grid"] = args.h_grid
    if args.C is not None:
        fields["bandwidth_c"] = args.C
    if args.delta is not None:
        fields["bandwidth_delta"] = args.delta
    return ExperimentConfig(**fields)


def cmd_table(args: argparse.Namespace) -> int:
    cfg = _experiment(args)
    if args.id == "table1":
        table = run_table1(cfg)
    elif args.id == "table2":
        table = run_table2(cfg)
    else:
        table = run_ase_table(cfg, args.H)
    if args.out:
        write_table(args.out, table)
    _print(table)
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    master_seed = args.seed if args.seed is not None else ExperimentConfig().master_seed
    common = {"n": args.n, "reps": args.reps, "master_seed": master_seed, "workers": args.threads}
    if args.kind == "rate":
        result = run_rate_check(args.H, args.h, **common)
    elif args.kind == "correlation":
        result = run_correlation_checks(args.H, args.h, **common)
    elif args.kind == "limit":
        result = run_limit_comparison(args.H, args.h, **common)
    else:
        result = run_size_check(args.H, args.h, alpha=args.alpha, **common)
    emit(result, args.out, f"check_{args.kind}", "json")
    _print(result)
    return EXIT_OK


def cmd_z2(args: argparse.Namespace) -> int:
    seed = _seed(args)
    constants = tuple(args.constants) if args.constants else None
    sample = sample_z2(args.H, args.h, args.kind, args.grid_size, args.draws, seed, constants)
    path = write_frame(f"{args.out}/z2_{args.kind}.csv", pd.DataFrame({"draw": sample.draws})) if args.out else None
    draws = sample.draws
    _print({
        "kind": sample.kind,
        "n_draws": int(draws.size),
        "mean": float(draws.mean()),
        "var": float(draws.var(ddof=1)),
        "grid_size": sample.grid_size,
        "truncation": sample.truncation,
        "seed": seed,
        "path": path,
    })
    return EXIT_OK


def cmd_kappa2(args: argparse.Namespace) -> int:
    seed = _seed(args)
    x, y = _load_pair(args)
    fit = fit_lse(x, y)
    V = None
    if args.weighted:
        V = loo_variance(x, fit.residuals, args.C * x.size ** (-args.delta), get_kernel(args.kernel))
    summands = kappa2_summands(x, fit.residuals, V)
    block_len = args.block_len or default_block_len(x.size)
    kappa2 = kappa2_block_bootstrap(summands, block_len, args.B, seed)
    payload = {"kappa2": kappa2, "n": int(x.size), "block_len": block_len, "B": args.B, "weighted": args.weighted, "seed": seed}
    emit(payload, args.out, "kappa2", "json")
    _print(payload)
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    series = ingest_fx(args.file, args.column, args.monthly)
    path = write_series(f"{args.out}/{args.name}.csv", series) if args.out else None
    values = series.values
    _print({"n": series.n, "mean": float(values.mean()), "sd": float(values.std(ddof=1)), "path": path})
    return EXIT_OK


def cmd_qq(args: argparse.Namespace) -> int:
    seed = _seed(args)
    frame = qq_data(read_series(args.series), args.h_hat, seed)
    if args.out:
        write_frame(f"{args.out}/qq.csv", frame)
    _print({"n": len(frame), "h_hat": args.h_hat, "seed": seed})
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace) -> int:
    options = PipelineOptions(
        column=args.column,
        monthly=args.monthly,
        kernel=args.kernel,
        bandwidth_c=args.C,
        bandwidth_delta=args.delta,
        m=args.m,
        whittle_residuals=args.whittle_residuals,
        alpha=args.alpha,
        seed=args.seed,
    )
    report = get_service_manager_sync().run_pipeline(args.x_file, args.y_file, options)
    if args.out:
        emit(report, args.out, "report", "json")
        if args.seed is not None:
            pair = FxIngestionService().ingest_pair(args.x_file, args.y_file, args.column, args.monthly)
            write_frame(f"{args.out}/qq.csv", qq_data(pair["x"].to_numpy(), report.whittle_x.H_hat, args.seed))
    _print(report)
    return EXIT_OK


def _add_pair(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--x", required=True, help="Design series CSV (column `value`)")
    parser.add_argument("--y", required=True, help="Response series CSV (column `value`)")


def _add_bandwidth(parser: argparse.ArgumentParser, c: Optional[float] = 3.0, delta: Optional[float] = 0.2) -> None:
    parser.add_argument("--C", type=float, default=c, help="Bandwidth constant in b = C n^-delta")
    parser.add_argument("--delta", type=float, default=delta, help="Bandwidth exponent")
    parser.add_argument("--kernel", default=settings.default_kernel, choices=["cosine", "uniform", "gaussian"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m app",
        description="Estimation and lack-of-fit testing for regression with long-memory design and errors",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--seed", type=int, default=None, help="Seed (master seed for tables)")
    parser.add_argument("--threads", type=int, default=settings.threads, help="Worker processes for Monte Carlo runs")
    parser.add_argument("--out", default=None, help="Output directory for artifacts")
    parser.add_argument("--format", default=settings.output_format, choices=["csv", "json"])
    parser.add_argument("--log-level", default=settings.log_level)
    parser.add_argument("--version", action="version", version=build_provenance())
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Simulate fGn or FARIMA errors")
    simulate.add_argument("--kind", choices=["fgn", "farima_ma"], default="fgn")
    simulate.add_argument("--n", type=int, required=True)
    simulate.add_argument("--h", type=float, default=0.75, help="fGn memory parameter")
    simulate.add_argument("--H", type=float, default=0.75, help="FARIMA memory parameter")
    simulate.add_argument("--mu", type=float, default=0.0)
    simulate.add_argument("--gamma", type=float, default=1.0)
    simulate.add_argument("--burn-in", type=int, default=None)
    simulate.set_defaults(handler=cmd_simulate)

    fit = commands.add_parser("fit", help="Least-squares fit of y on r(x)")
    _add_pair(fit)
    fit.add_argument("--basis", default="simple_linear", choices=["simple_linear", "polynomial", "through_origin"])
    fit.add_argument("--degree", type=int, default=1)
    fit.set_defaults(handler=cmd_fit)

    variance = commands.add_parser("variance", help="Kernel estimate of sigma^2 on a grid")
    _add_pair(variance)
    _add_bandwidth(variance)
    variance.add_argument("--estimator", default="kernel", choices=["kernel", "nadaraya_watson"])
    variance.add_argument("--lo", type=float, default=-1.5)
    variance.add_argument("--hi", type=float, default=1.5)
    variance.add_argument("--step", type=float, default=0.01)
    variance.set_defaults(handler=cmd_variance)

    whittle = commands.add_parser("whittle", help="Local Whittle estimate of H")
    whittle.add_argument("--series", required=True)
    whittle.add_argument("--m", type=int, default=None)
    whittle.add_argument("--a1", type=float, default=None)
    whittle.add_argument("--a2", type=float, default=None)
    whittle.set_defaults(handler=cmd_whittle)

    goftest = commands.add_parser("goftest", help="Lack-of-fit test D_n")
    _add_pair(goftest)
    _add_bandwidth(goftest)
    goftest.add_argument("--basis", default="simple_linear", choices=["simple_linear", "polynomial", "through_origin"])
    goftest.add_argument("--degree", type=int, default=1)
    goftest.add_argument("--m", type=int, default=None)
    goftest.add_argument("--alpha", type=float, default=settings.significance_level)
    goftest.set_defaults(handler=cmd_goftest)

    table = commands.add_parser("table", help="Regenerate a simulation table")
    table.add_argument("--id", required=True, choices=["table1", "table2", "ase"])
    table.add_argument("--H", type=float, default=0.75, help="Fixed H of an ASE table")
    table.add_argument("--n", type=int, default=500)
    table.add_argument("--reps", type=int, default=200)
    table.add_argument("--H-grid", dest="H_grid", type=float, nargs="+", default=None)
    table.add_argument("--h-grid", dest="h_grid", type=float, nargs="+", default=None)
    table.add_argument("--estimator", default="kernel", choices=["kernel", "nadaraya_watson"])
    table.add_argument("--whittle-residuals", default="slope_only", choices=["slope_only", "full"])
    _add_bandwidth(table, c=None, delta=None)
    table.set_defaults(handler=cmd_table)

    check = commands.add_parser("check", help="Monte Carlo rate, correlation, limit-law and size checks")
    check.add_argument("--kind", required=True, choices=["rate", "correlation", "limit", "size"])
    check.add_argument("--H", type=float, default=0.85)
    check.add_argument("--h", type=float, default=0.85)
    check.add_argument("--n", type=int, default=500)
    check.add_argument("--reps", type=int, default=200)
    check.add_argument("--alpha", type=float, default=settings.significance_level)
    check.set_defaults(handler=cmd_check)

    z2 = commands.add_parser("z2", help="Draws of the double Wiener-Ito limit variables")
    z2.add_argument("--H", type=float, required=True)
    z2.add_argument("--h", type=float, required=True)
    z2.add_argument("--kind", default="Z2_independent", choices=["Z2_independent", "Z2_star", "composite_thm21"])
    z2.add_argument("--draws", type=int, default=1000)
    z2.add_argument("--grid-size", dest="grid_size", type=int, default=None)
    z2.add_argument("--constants", type=float, nargs=3, default=None, metavar=("C1", "SIGMA0", "GAMMA"))
    z2.set_defaults(handler=cmd_z2)

    kappa2 = commands.add_parser("kappa2", help="Block-bootstrap estimate of the long-run variance kappa_2")
    _add_pair(kappa2)
    _add_bandwidth(kappa2)
    kappa2.add_argument("--block-len", dest="block_len", type=int, default=None, help="ceil(n^(1/3)) when omitted")
    kappa2.add_argument("--B", type=int, default=500, help="Bootstrap resamples")
    kappa2.add_argument("--weighted", action="store_true", help="Weight the summands by the leave-one-out V")
    kappa2.set_defaults(handler=cmd_kappa2)

    ingest = commands.add_parser("ingest", help="Differenced log rates from a date,value CSV")
    ingest.add_argument("--file", required=True)
    ingest.add_argument("--column", default="value")
    ingest.add_argument("--monthly", action="store_true", help="Last observation of each month")
    ingest.add_argument("--name", default="series", help="Output file stem")
    ingest.set_defaults(handler=cmd_ingest)

    qq = commands.add_parser("qq", help="QQ data against simulated fGn")
    qq.add_argument("--series", required=True)
    qq.add_argument("--h-hat", dest="h_hat", type=float, required=True)
    qq.set_defaults(handler=cmd_qq)

    pipeline = commands.add_parser("pipeline", help="Exchange-rate lack-of-fit analysis")
    pipeline.add_argument("--x-file", required=True)
    pipeline.add_argument("--y-file", required=True)
    pipeline.add_argument("--column", default="value")
    pipeline.add_argument("--monthly", action="store_true")
    pipeline.add_argument("--m", type=int, default=None)
    pipeline.add_argument("--whittle-residuals", default="full", choices=["full", "slope_only"])
    pipeline.add_argument("--alpha", type=float, default=settings.significance_level)
    _add_bandwidth(pipeline, c=settings.pipeline_bandwidth_c, delta=settings.bandwidth_delta)
    pipeline.set_defaults(handler=cmd_pipeline)

    return parser


def root_cause(error: BaseException) -> BaseException:
    """Follow PipelineStageError.cause and explicit chaining to the original error."""
    seen = set()
    while id(error) not in seen:
        seen.add(id(error))
        nested = getattr(error, "cause", None) or error.__cause__
        if nested is None:
            break
        error = nested
    return error


def exit_code(error: BaseException) -> int:
    return EXIT_DEGENERATE if isinstance(root_cause(error), DegenerateTestError) else EXIT_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except LMRegressionError as e:
        logger.error(f"{type(root_cause(e)).__name__}: {e}")
        return exit_code(e)
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
