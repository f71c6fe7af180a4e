#!/usr/bin/env python3
"""
Q_k Flow Laboratory Command Line.

Central entry point for the numerical laboratory, dispatching to:
- ``run``: graph flow of a preset or experiment file, with verdicts on every
  a priori estimate
- ``construct``: approximation of a graph by closed convex bodies over a
  sweep of reflection levels
- ``verify``: randomized property sweeps of the symmetric-function layer and
  closed-form support-flow checks
- ``oracle``: closed-form shrinking-ball values
- ``report``: re-evaluate verdicts from a saved monitor series

Public API:
    Exports 2 functions via ``__all__``:
    - ``main``: argument parsing and dispatch, returns the exit code
    - ``run_command``: command executor with error handling

Return Codes:
    - 0: every verdict passed
    - 1: at least one verdict failed
    - 2: configuration or runtime error (one line on stderr, trace in the
      log file)

See Also:
    - :mod:`scripts.flow` - graph flow integration
    - :mod:`scripts.pipeline` - closed-body construction
    - :mod:`scripts.verify` - property sweeps
    - :mod:`config` - configuration settings
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from dataclasses import replace
from pathlib import Path

import config
from __version__ import __version__
from scripts.errors import (
    ConfigError,
    EarlyExtinction,
    Extinct,
    NestingViolation,
    QkFlowError,
)
from scripts.experiment import (
    CONSTRUCTION_PRESETS,
    PRESETS,
    ExperimentConfig,
    VerifyConfig,
    get_construction_preset,
    get_preset,
    load_experiment_file,
)
from scripts.flow import refinement_drift, run_graph_flow
from scripts.monitors import Verdict, evaluate_all
from scripts.oracle import BallSolution, ball_radius, ball_speed, existence_time_lower_bound
from scripts.persistence import load_series_csv, save_report
from scripts.pipeline import ConstructionConfig, run_construction
from scripts.utils import logging as log
from scripts.verify import run_verification

try:
    import argcomplete

    ARGCOMPLETE_AVAILABLE = True
except ImportError:
    ARGCOMPLETE_AVAILABLE = False

__all__ = ["main", "run_command"]

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2

DRIFT_TOL = 1e-2


def run_command(name: str, func: Callable[[], int]) -> int:
    """
    Execute a subcommand, mapping exceptions to exit codes.

    Check failures raised by the construction (nesting, early extinction)
    count as failed verdicts; every other laboratory, configuration or I/O
    error is a runtime error.
    """
    try:
        log.info(f"--- {name} ---")
        code = func()
        if code == EXIT_PASS:
            log.success(f"{name} completed: all verdicts PASS")
        else:
            log.error(f"{name} completed with failing verdicts", include_log_path=False)
        return code
    except (NestingViolation, EarlyExtinction) as e:
        log.error(f"{name}: {e}", exc_info=True)
        print(f"FAIL: {e}", file=sys.stderr)
        return EXIT_FAIL
    except (QkFlowError, OSError, ValueError) as e:
        log.error(f"Error in {name}: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        log.critical(f"Unexpected error in {name}: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


def _print_verdicts(title: str, verdicts: Sequence[Verdict]) -> int:
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)
    for v in verdicts:
        print(f"  {v.status:<4}  {v.name:<24} margin={v.margin: .3e}  {v.detail}")
    print()
    return EXIT_PASS if all(v.passed for v in verdicts) else EXIT_FAIL


def _parse_ball(tokens: Sequence[str]) -> tuple[float, int, int]:
    values: dict[str, str] = {}
    for token in tokens:
        key, sep, value = token.partition("=")
        if not sep:
            raise ConfigError(f"--ball expects key=value tokens, got '{token}'")
        values[key.strip()] = value.strip()
    unknown = set(values) - {"R", "n", "k"}
    if unknown:
        raise ConfigError(f"--ball accepts R, n and k, got {', '.join(sorted(unknown))}")
    try:
        return float(values.get("R", "1")), int(values.get("n", "2")), int(values.get("k", "1"))
    except ValueError as exc:
        raise ConfigError(f"invalid --ball value: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _flow_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        loaded = load_experiment_file(args.config).flow
        if loaded is None:
            raise ConfigError(f"{args.config} has no [flow] section")
        cfg = loaded
    else:
        cfg = get_preset(args.preset)
    step = cfg.step
    if args.t_end is not None:
        monitor_dt = step.monitor_dt
        if monitor_dt is not None and monitor_dt > args.t_end:
            monitor_dt = args.t_end / 10.0
        step = replace(step, t_end=args.t_end, monitor_dt=monitor_dt)
    cfg = cfg.with_step(step)
    overrides = {}
    if args.num_nodes is not None:
        overrides["num_nodes"] = args.num_nodes
    if args.M is not None:
        overrides["M"] = args.M
    if args.output is not None:
        overrides["output_prefix"] = Path(args.output)
    if overrides:
        cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _flow_config(args)
    series = run_graph_flow(cfg, progress=not args.no_progress)
    verdicts = evaluate_all(series)
    extra = {}
    if args.drift:
        drift = refinement_drift(cfg)
        verdicts.append(
            Verdict("refinement", drift["max"] <= DRIFT_TOL, drift["max"], "max relative drift under halving")
        )
        extra["refinement_drift"] = drift
    code = _print_verdicts(f"Graph flow '{cfg.label}' (t_end={cfg.step.t_end:g})", verdicts)
    report = args.report or (
        None if cfg.output_prefix is None else f"{cfg.output_prefix}_report.json"
    )
    if report:
        save_report(report, cfg.echo(), verdicts, code, extra)
    return code


def _construction_config(args: argparse.Namespace) -> ConstructionConfig:
    if args.config:
        loaded = load_experiment_file(args.config).construction
        if loaded is None:
            raise ConfigError(f"{args.config} has no [construction] section")
        cfg = loaded
    else:
        cfg = get_construction_preset(args.preset)
    overrides: dict[str, object] = {}
    if args.horizon is not None:
        overrides["flow_horizon"] = args.horizon
    if args.workers is not None:
        overrides["workers"] = args.workers
    return replace(cfg, **overrides) if overrides else cfg


def cmd_construct(args: argparse.Namespace) -> int:
    cfg = _construction_config(args)
    report = run_construction(cfg, progress=not args.no_progress)
    verdicts = report.verdicts()
    code = _print_verdicts(f"Construction '{cfg.label}'", verdicts)
    if args.report:
        save_report(args.report, cfg.echo(), verdicts, code, report.summary())
    return code


def cmd_verify(args: argparse.Namespace) -> int:
    base = VerifyConfig()
    if args.config:
        base = load_experiment_file(args.config).verify or base
    cfg = replace(
        base,
        **{
            key: value
            for key, value in {
                "samples": args.samples,
                "nmax": args.nmax,
                "seed": args.seed,
                "gradient_samples": args.gradient_samples,
                "support_nodes": args.support_nodes,
            }.items()
            if value is not None
        },
    )
    verdicts = run_verification(
        samples=cfg.samples,
        nmax=cfg.nmax,
        seed=cfg.seed,
        gradient_samples=cfg.gradient_samples,
        fd_step=cfg.fd_step,
        support_nodes=cfg.support_nodes,
    )
    code = _print_verdicts("Verification sweeps", verdicts)
    if args.report:
        save_report(args.report, vars(cfg), verdicts, code)
    return code


def cmd_oracle(args: argparse.Namespace) -> int:
    R, n, k = _parse_ball(args.ball)
    sol = BallSolution(center=[0.0] * (n + 1), R0=R, n=n, k=k)
    print(f"ball R={R:g} n={n} k={k}")
    print(f"extinction time = {sol.extinction_time:.17g}")
    print(f"existence time lower bound = {existence_time_lower_bound(R, n, k):.17g}")
    if args.t is not None:
        try:
            print(f"radius(t={args.t:g}) = {ball_radius(sol, args.t):.17g}")
            print(f"speed(t={args.t:g}) = {ball_speed(sol, args.t):.17g}")
        except Extinct as exc:
            print(f"radius(t={args.t:g}): {exc}")
    return EXIT_PASS


def cmd_report(args: argparse.Namespace) -> int:
    series = load_series_csv(args.series, n=args.n, k=args.k, M=args.M)
    verdicts = evaluate_all(series)
    code = _print_verdicts(f"Verdicts for {args.series}", verdicts)
    if args.report:
        save_report(
            args.report,
            {"series": str(args.series), "n": args.n, "k": args.k, "M": args.M},
            verdicts,
            code,
        )
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkflow",
        description="Numerical laboratory for the Q_k curvature flow of convex hypersurfaces.",
        epilog="""
Examples:
  %(prog)s verify --samples 10000 --nmax 6
  %(prog)s oracle --ball R=1 n=2 k=2 --t 0.5
  %(prog)s run --preset cup-k2 --tEnd 0.05
  %(prog)s construct --preset paraboloid-construction --report results/cons.json
  %(prog)s report --series results/cup_series.csv --n 2 --k 2 --M 0.4
        """,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}",
        help="Show program version and exit",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Enable verbose (DEBUG) logging"
    )
    parser.add_argument(
        "--simple", action="store_true", help="Enable simple logging (INFO level, minimal details)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Integrate a graph flow and judge its estimates")
    source = run.add_mutually_exclusive_group()
    source.add_argument("--preset", choices=sorted(PRESETS), default="paraboloid")
    source.add_argument("--config", type=Path, help="Experiment file with a [flow] section")
    run.add_argument("--tEnd", "--t-end", dest="t_end", type=float, help="Final time")
    run.add_argument("--num-nodes", type=int, help="Grid nodes per axis")
    run.add_argument("--M", type=float, help="Cutoff level of the estimates")
    run.add_argument("--output", help="Output prefix for CSV, snapshot and report")
    run.add_argument("--report", help="Path of the JSON report")
    run.add_argument("--drift", action="store_true", help="Also check refinement drift")
    run.add_argument("--no-progress", action="store_true", help="Hide progress bars")
    run.set_defaults(handler=cmd_run)

    cons = sub.add_parser("construct", help="Run the closed-body approximation sweep")
    source = cons.add_mutually_exclusive_group()
    source.add_argument(
        "--preset", choices=sorted(CONSTRUCTION_PRESETS), default="paraboloid-construction"
    )
    source.add_argument("--config", type=Path, help="Experiment file with a [construction] section")
    cons.add_argument("--horizon", type=float, help="Flow horizon of every branch")
    cons.add_argument("--workers", type=int, help="Concurrent branches")
    cons.add_argument("--report", help="Path of the JSON report")
    cons.add_argument("--no-progress", action="store_true", help="Hide progress bars")
    cons.set_defaults(handler=cmd_construct)

    ver = sub.add_parser("verify", help="Run the property sweeps")
    ver.add_argument("--config", type=Path, help="Experiment file with a [verify] section")
    ver.add_argument("--samples", type=int, help="Random vectors per (n, k)")
    ver.add_argument("--nmax", type=int, help="Largest dimension swept")
    ver.add_argument("--seed", type=int, help="Random seed")
    ver.add_argument("--gradient-samples", type=int, help="Samples of the gradient check")
    ver.add_argument("--support-nodes", type=int, help="Angular nodes of the ball-law check")
    ver.add_argument("--report", help="Path of the JSON report")
    ver.set_defaults(handler=cmd_verify)

    orc = sub.add_parser("oracle", help="Print closed-form shrinking-ball values")
    orc.add_argument("--ball", nargs="+", default=["R=1", "n=2", "k=1"], metavar="KEY=VALUE")
    orc.add_argument("--t", type=float, help="Time at which to evaluate the radius")
    orc.set_defaults(handler=cmd_oracle)

    rep = sub.add_parser("report", help="Re-evaluate verdicts of a saved monitor series")
    rep.add_argument("--series", type=Path, required=True, help="Monitor series CSV")
    rep.add_argument("--n", type=int, required=True, help="Dimension of the run")
    rep.add_argument("--k", type=int, default=1, help="Speed index of the run")
    rep.add_argument("--M", type=float, required=True, help="Cutoff level of the run")
    rep.add_argument("--report", help="Path of the JSON report")
    rep.set_defaults(handler=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, configure logging and dispatch; returns the exit code."""
    parser = build_parser()

    # Enable shell completion if available
    if ARGCOMPLETE_AVAILABLE:
        argcomplete.autocomplete(parser)

    args = parser.parse_args(argv)

    if args.verbose:
        log_level = logging.DEBUG
    elif args.simple:
        log_level = logging.INFO
    else:
        log_level = config.LOG_LEVEL

    log.setup_logger(name=config.LOG_NAME, log_level=log_level, simple_mode=args.simple)
    log.info(f"Starting qkflow {__version__}: {args.command}")

    for warning in config.validate_config():
        log.warning(warning)
    config.ensure_directories()

    return run_command(args.command, lambda: args.handler(args))


if __name__ == "__main__":
    sys.exit(main())
