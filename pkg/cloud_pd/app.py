from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import config
from .analysis.replay import check_round_csv
from .diagnostics import diagnostics_summary
from .error_handler import EXIT_NOT_CONVERGED, EXIT_OK, CloudPDError, install_exception_hook
from .experiments.counterexample import (
    CounterexampleConfig,
    run_counterexample,
    run_synchronized_counterexample,
    write_counterexample_csv,
)
from .experiments.flow import SWEEP, FlowResult, FlowRoutingConfig, run_flow_experiment, run_sweep
from .i18n import set_language, t
from .sim.engine import STOP_HORIZON

logger = logging.getLogger(__name__)


def _configure_logging(verbosity: int) -> None:
    if verbosity >= 2:
        level = logging.DEBUG
    elif verbosity == 1:
        level = logging.INFO
    else:
        level = getattr(logging, os.getenv("CLOUDPD_LOG_LEVEL", "WARNING").upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _flow_config(args: argparse.Namespace) -> FlowRoutingConfig:
    values = config.load_cfg(args.config)
    for field in ("alpha", "beta", "seed", "tolerance"):
        value = getattr(args, field, None)
        if value is not None:
            values[field] = value
    if args.horizon is not None:
        values["horizon_rounds"] = args.horizon
    return FlowRoutingConfig.from_cfg(values)


def _print_result(result: FlowResult) -> None:
    print(
        t(
            "cli.flow.summary",
            alpha=result.alpha,
            beta=result.beta,
            seed=result.seed,
            rounds=result.rounds,
            primal=result.primal_reg_error,
            dual=result.dual_reg_error,
            gap=result.regularization_gap,
            violation=result.max_violation,
        )
    )
    if not result.converged:
        print(t("cli.flow.not_converged", rounds=result.rounds))
    if result.bound_violations:
        print(t("cli.bounds.violations", count=result.bound_violations))
    if result.csv_path:
        print(t("cli.written", path=result.csv_path))


def _result_code(results: Sequence[FlowResult]) -> int:
    if any(not result.converged or result.bound_violations for result in results):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_flow(args: argparse.Namespace) -> int:
    flow_config = _flow_config(args)
    result = run_flow_experiment(flow_config, out_dir=args.out, record_events=args.events)
    _print_result(result)
    return _result_code([result])


def _cmd_sweep(args: argparse.Namespace) -> int:
    flow_config = _flow_config(args)
    seeds = range(flow_config.seed, flow_config.seed + args.seeds)
    results = run_sweep(flow_config, SWEEP, seeds, jobs=args.jobs, out_dir=args.out, record_events=args.events)
    for result in results:
        _print_result(result)
    if args.out is not None:
        print(t("cli.written", path=Path(args.out) / "sweep_summary.csv"))
    return _result_code(results)


def _cmd_counterexample(args: argparse.Namespace) -> int:
    trace = run_counterexample(CounterexampleConfig(), record_inner=args.inner)
    report = trace.oscillation()
    print(
        t(
            "cli.counterexample.summary",
            first=report.amplitude_first,
            last=report.amplitude_last,
            decaying=t("cli.yes") if report.decaying else t("cli.no"),
        )
    )
    if args.out is not None:
        for path in write_counterexample_csv(trace, args.out):
            print(t("cli.written", path=path))
    if args.synchronized:
        synced = run_synchronized_counterexample(rounds=args.rounds, tolerance=args.tolerance)
        print(t("cli.counterexample.synchronized", rounds=synced.round_count, reason=synced.stop_reason))
        if synced.stop_reason == STOP_HORIZON:
            print(t("cli.counterexample.not_converged", rounds=synced.round_count))
            return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_bounds_check(args: argparse.Namespace) -> int:
    check = check_round_csv(args.trace)
    for report in (check.dual, check.primal):
        print(t("cli.bounds.summary", name=report.name, rounds=report.rounds.size, violations=report.violations))
        if args.out is not None:
            path = report.write_csv(Path(args.out) / f"bounds_{report.name}.csv")
            print(t("cli.written", path=path))
    if check.mismatched:
        print(t("cli.bounds.mismatch", count=check.mismatched))
    return EXIT_OK if check.ok else EXIT_NOT_CONVERGED


def _cmd_about(args: argparse.Namespace) -> int:
    print(t("app.name"))
    print(diagnostics_summary(args.config))
    return EXIT_OK


def _add_flow_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help=t("cli.option.config"))
    parser.add_argument("--seed", type=int, help=t("cli.option.seed"))
    parser.add_argument("--horizon", type=int, help=t("cli.option.horizon"))
    parser.add_argument("--tolerance", type=float, help=t("cli.option.tolerance"))
    parser.add_argument("--out", type=Path, default=config.RESULTS_DIR, help=t("cli.option.out"))
    parser.add_argument("--events", action="store_true", help=t("cli.option.events"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cloud_pd", description=t("cli.description"))
    parser.add_argument("-v", "--verbose", action="count", default=0, help=t("cli.option.verbose"))
    parser.add_argument("--lang", help=t("cli.option.lang"))
    commands = parser.add_subparsers(dest="command", required=True)

    flow = commands.add_parser("flow", help=t("cli.flow.help"))
    _add_flow_options(flow)
    flow.add_argument("--alpha", type=float, help=t("cli.option.alpha"))
    flow.add_argument("--beta", type=float, help=t("cli.option.beta"))
    flow.set_defaults(handler=_cmd_flow)

    sweep = commands.add_parser("sweep", help=t("cli.sweep.help"))
    _add_flow_options(sweep)
    sweep.add_argument("--seeds", type=int, default=1, help=t("cli.option.seeds"))
    sweep.add_argument("--jobs", type=int, default=1, help=t("cli.option.jobs"))
    sweep.set_defaults(handler=_cmd_sweep)

    counter = commands.add_parser("counterexample", help=t("cli.counterexample.help"))
    counter.add_argument("--out", type=Path, default=config.RESULTS_DIR, help=t("cli.option.out"))
    counter.add_argument("--inner", action="store_true", help=t("cli.option.inner"))
    counter.add_argument("--synchronized", action="store_true", help=t("cli.option.synchronized"))
    counter.add_argument("--tolerance", type=float, default=1e-6, help=t("cli.option.tolerance"))
    counter.add_argument("--rounds", type=int, default=200_000, help=t("cli.option.horizon"))
    counter.set_defaults(handler=_cmd_counterexample)

    bounds = commands.add_parser("bounds-check", help=t("cli.bounds.help"))
    bounds.add_argument("--trace", type=Path, required=True, help=t("cli.option.trace"))
    bounds.add_argument("--out", type=Path, help=t("cli.option.out"))
    bounds.set_defaults(handler=_cmd_bounds_check)

    about = commands.add_parser("about", help=t("cli.about.help"))
    about.add_argument("--config", help=t("cli.option.config"))
    about.set_defaults(handler=_cmd_about)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # The catalog has to be chosen before the parser renders its help texts.
    for position, arg in enumerate(argv):
        if arg == "--":
            break
        if arg.startswith("--lang="):
            set_language(arg.partition("=")[2])
            break
        if arg == "--lang" and position + 1 < len(argv):
            set_language(argv[position + 1])
            break
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    install_exception_hook()
    try:
        return args.handler(args)
    except CloudPDError as error:
        logger.error("%s failed: %s", args.command, error)
        field = f" [{error.field}]" if error.field else ""
        sys.stderr.write(f"{t('error.prefix')}{field}: {error}\n")
        return error.exit_code
