from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from functools import partial
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from ..analysis.bounds import RateConstants, bound_columns
from ..analysis.replay import rate_reports
from ..config import DEFAULT_CFG, FLOW_PATHS
from ..core.lagrangian import RegParams, StepSizes
from ..core.parameters import error_bounds
from ..error_handler import ConfigError
from ..i18n import t
from ..problem.bounds import compute_bounds
from ..problem.families import network_utility_problem
from ..problem.spec import ProblemSpec, essential_neighborhoods
from ..sim.engine import run_async
from ..sim.export import round_table, trace_metadata, write_event_csv, write_round_csv
from ..sim.schedule import ScheduleParams, generate_schedule
from ..solver import reference_solution, solve_saddle

logger = logging.getLogger(__name__)

SWEEP: tuple[tuple[float, float], ...] = ((0.1, 0.1), (0.01, 0.01), (0.001, 0.001))

_POSITIVE_FIELDS = (
    "edge_count",
    "capacity",
    "utility_weight",
    "congestion_scale",
    "slater_value",
    "alpha",
    "beta",
    "round_length_min",
    "horizon_rounds",
    "tolerance",
    "dual_tolerance",
    "reference_tolerance",
)


@dataclass(frozen=True)
class FlowRoutingConfig:
    paths: tuple[tuple[int, ...], ...] = tuple(tuple(path) for path in FLOW_PATHS)
    edge_count: int = DEFAULT_CFG["edge_count"]
    capacity: float = DEFAULT_CFG["capacity"]
    utility_weight: float = DEFAULT_CFG["utility_weight"]
    congestion_scale: float = DEFAULT_CFG["congestion_scale"]
    box_lower: float = DEFAULT_CFG["box_lower"]
    box_upper: float = DEFAULT_CFG["box_upper"]
    slater_value: float = DEFAULT_CFG["slater_value"]
    alpha: float = DEFAULT_CFG["alpha"]
    beta: float = DEFAULT_CFG["beta"]
    dual_step_fraction: float = DEFAULT_CFG["dual_step_fraction"]
    update_probability: float = DEFAULT_CFG["update_probability"]
    edge_probability: float = DEFAULT_CFG["edge_probability"]
    round_length_min: int = DEFAULT_CFG["round_length_min"]
    round_length_max: int = DEFAULT_CFG["round_length_max"]
    delay_max: int = DEFAULT_CFG["delay_max"]
    seed: int = DEFAULT_CFG["seed"]
    horizon_rounds: int = DEFAULT_CFG["horizon_rounds"]
    tolerance: float = DEFAULT_CFG["tolerance"]
    dual_tolerance: float = DEFAULT_CFG["dual_tolerance"]
    reference_tolerance: float = DEFAULT_CFG["reference_tolerance"]

    def __post_init__(self) -> None:
        object.__setattr__(self, "paths", tuple(tuple(int(edge) for edge in path) for path in self.paths))
        if not self.paths:
            raise ConfigError(t("error.config.bad_value", field="paths", value=self.paths), field="paths")
        for name in _POSITIVE_FIELDS:
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(t("error.positive", field=name, value=value), field=name)
        if self.box_lower >= self.box_upper:
            raise ConfigError(t("error.config.box", lower=self.box_lower, upper=self.box_upper), field="box_upper")
        if self.round_length_max < self.round_length_min:
            raise ConfigError(
                t("error.config.bad_value", field="round_length_max", value=self.round_length_max),
                field="round_length_max",
            )

    @classmethod
    def from_cfg(cls, values: dict[str, Any]) -> FlowRoutingConfig:
        known = {item.name for item in fields(cls)}
        return cls(**{key: value for key, value in values.items() if key in known})

    def with_setting(self, alpha: float, beta: float, seed: int | None = None) -> FlowRoutingConfig:
        return replace(self, alpha=alpha, beta=beta, seed=self.seed if seed is None else seed)

    @property
    def schedule_params(self) -> ScheduleParams:
        return ScheduleParams(
            update_probability=self.update_probability,
            edge_probability=self.edge_probability,
            round_length=(self.round_length_min, self.round_length_max),
            delay_range=(0, self.delay_max),
            horizon_rounds=self.horizon_rounds,
        )


def build_flow_problem(config: FlowRoutingConfig) -> ProblemSpec:
    return network_utility_problem(
        config.paths,
        edge_count=config.edge_count,
        capacity=config.capacity,
        utility_weight=config.utility_weight,
        congestion_scale=config.congestion_scale,
        box_lower=config.box_lower,
        box_upper=config.box_upper,
        slater_value=config.slater_value,
    )


@dataclass
class FlowResult:
    alpha: float
    beta: float
    seed: int
    rounds: int
    ticks: int
    stop_reason: str
    primal_reg_error: float
    primal_unreg_error: float
    dual_reg_error: float
    dual_unreg_error: float
    regularization_gap: float
    max_violation: float
    violation_bound: float
    bound_violations: int
    tolerance: float
    csv_path: str = ""
    events_path: str = ""

    @property
    def converged(self) -> bool:
        return self.primal_reg_error < self.tolerance and self.dual_reg_error < self.tolerance

    def as_row(self) -> dict[str, Any]:
        row = asdict(self)
        row["converged"] = int(self.converged)
        return row


SUMMARY_COLUMNS = tuple(item.name for item in fields(FlowResult)) + ("converged",)


def result_filename(config: FlowRoutingConfig) -> str:
    return f"flow_a{config.alpha:g}_b{config.beta:g}_s{config.seed}.csv"


def run_flow_experiment(
    config: FlowRoutingConfig,
    *,
    out_dir: Path | str | None = None,
    record_events: bool = False,
) -> FlowResult:
    """One asynchronous run on the routing problem, from x(0) = 0 and mu(0) = 0."""
    spec = build_flow_problem(config)
    reg = RegParams(config.alpha, config.beta)
    bounds = compute_bounds(spec, reg.alpha)
    steps = StepSizes.recommended(bounds, reg, config.dual_step_fraction)
    saddle = solve_saddle(spec, reg, steps, tol=config.reference_tolerance)
    reference = reference_solution(spec)
    schedule = generate_schedule(config.seed, config.schedule_params, essential_neighborhoods(spec))
    trace = run_async(
        spec,
        reg,
        steps,
        schedule,
        np.zeros(spec.dimension),
        np.zeros(spec.constraint_count),
        bounds=bounds,
        record_events=record_events,
        record_snapshots=False,
        reference=saddle,
        tolerance=config.tolerance,
        residual_tolerance=config.dual_tolerance,
    )
    consts = RateConstants.from_problem(bounds, reg, steps, spec.agent_count)
    dual_report, primal_report = rate_reports(trace, saddle, consts)
    violations = dual_report.violations + primal_report.violations
    if violations:
        logger.warning("rate bounds violated %d times for alpha=%g seed=%d", violations, reg.alpha, config.seed)
    regularization = error_bounds(reg, bounds)

    csv_path = events_path = ""
    if out_dir is not None:
        out_dir = Path(out_dir)
        table = round_table(trace, spec, saddle, reference)
        table["dual_bound"], table["primal_bound"] = bound_columns(table["dual_reg_error"], table["cycles"], consts)
        meta = trace_metadata(trace, lipschitz=bounds.lipschitz, **consts.as_metadata())
        csv_path = str(write_round_csv(out_dir / result_filename(config), table, meta))
        if record_events:
            events_path = str(write_event_csv(out_dir / result_filename(config).replace(".csv", "_events.csv"), trace))

    final_state = trace.final_state
    final_dual = trace.rounds[-1].dual if trace.rounds else trace.initial_dual
    result = FlowResult(
        alpha=reg.alpha,
        beta=reg.beta,
        seed=config.seed,
        rounds=trace.round_count,
        ticks=trace.ticks,
        stop_reason=trace.stop_reason,
        primal_reg_error=float(np.linalg.norm(final_state - saddle.state)),
        primal_unreg_error=float(np.linalg.norm(final_state - reference.state)),
        dual_reg_error=float(np.linalg.norm(final_dual - saddle.dual)),
        dual_unreg_error=float(np.linalg.norm(final_dual - reference.dual)),
        regularization_gap=float(np.linalg.norm(saddle.state - reference.state)),
        max_violation=float(np.max(spec.constraint_values(saddle.state))),
        violation_bound=regularization.max_violation,
        bound_violations=violations,
        tolerance=config.tolerance,
        csv_path=csv_path,
        events_path=events_path,
    )
    logger.info(
        "flow alpha=%g beta=%g seed=%d: %d rounds, primal error %.3e, gap %.4g",
        result.alpha, result.beta, result.seed, result.rounds, result.primal_reg_error, result.regularization_gap,
    )
    return result


def _run_setting(
    setting: tuple[float, float, int], config: FlowRoutingConfig, out_dir: Path | None, record_events: bool
) -> FlowResult:
    alpha, beta, seed = setting
    return run_flow_experiment(config.with_setting(alpha, beta, seed), out_dir=out_dir, record_events=record_events)


def run_sweep(
    config: FlowRoutingConfig,
    settings: Sequence[tuple[float, float]] = SWEEP,
    seeds: Iterable[int] | None = None,
    *,
    jobs: int = 1,
    out_dir: Path | str | None = None,
    record_events: bool = False,
) -> list[FlowResult]:
    """Every (alpha, beta) setting for every seed; independent runs go to worker processes when jobs > 1."""
    seeds = [config.seed] if seeds is None else list(seeds)
    grid = [(alpha, beta, seed) for alpha, beta in settings for seed in seeds]
    out_dir = Path(out_dir) if out_dir is not None else None
    worker = partial(_run_setting, config=config, out_dir=out_dir, record_events=record_events)
    if jobs > 1 and len(grid) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(worker, grid))
    else:
        results = [worker(setting) for setting in grid]
    if out_dir is not None:
        write_summary(out_dir / "sweep_summary.csv", results)
    return results


def write_summary(path: Path, results: Sequence[FlowResult]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for result in results:
            writer.writerow(result.as_row())
    logger.info("wrote %s", path)
    return path
