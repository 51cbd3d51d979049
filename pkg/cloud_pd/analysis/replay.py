"""Replays stored run traces against the convergence bounds."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from ..core.lagrangian import RegParams
from ..error_handler import ValidationError
from ..i18n import t
from ..problem.bounds import BoundsPack, compute_bounds
from ..problem.spec import ProblemSpec
from ..sim.cycles import CycleTracker
from ..sim.export import read_round_csv
from ..sim.trace import DELIVER, UPDATE, RunTrace
from ..solver import SaddleEstimate, inner_target, solve_saddle
from .bounds import (
    BoundReport,
    RateConstants,
    bound_columns,
    build_report,
    dual_rate_bound_series,
    partial_round_bound,
    primal_round_bound,
    primal_total_bound,
)
from .norms import block_max_norm, restricted_block_max

logger = logging.getLogger(__name__)

LEVEL_RTOL = 1e-9
LEVEL_ATOL = 1e-10


class InnerTargets:
    """Caches x_hat^t = argmin_X L_reg(., mu(t)) per dual value."""

    def __init__(self, spec: ProblemSpec, reg: RegParams, gamma: float, tol: float = 1e-10):
        self.spec = spec
        self.reg = reg
        self.gamma = gamma
        self.tol = tol
        self._cache: dict[bytes, np.ndarray] = {}

    def __call__(self, dual: np.ndarray) -> np.ndarray:
        key = np.asarray(dual, dtype=float).tobytes()
        if key not in self._cache:
            estimate = inner_target(self.spec, self.reg, dual, self.tol, gamma=self.gamma)
            self._cache[key] = estimate.state
        return self._cache[key]

    def __len__(self) -> int:
        return len(self._cache)


def _check_trace(trace: RunTrace, spec: ProblemSpec) -> None:
    if trace.partition != spec.partition:
        raise ValidationError(t("error.trace.problem", trace=trace.problem, problem=spec.name), field="trace")


def _selected(trace: RunTrace, rounds: Iterable[int] | None) -> list[int]:
    return list(range(trace.round_count)) if rounds is None else [index for index in rounds if index < trace.round_count]


def rate_reports(trace: RunTrace, saddle: SaddleEstimate, consts: RateConstants) -> tuple[BoundReport, BoundReport]:
    """Squared dual error of mu(t+1) and primal error of x^c_t against their a priori bounds.

    Both assume the all-fresh cloud gate.
    """
    if trace.round_count == 0:
        empty = np.zeros(0)
        return build_report("dual", empty, empty), build_report("primal", empty, empty)
    initial_error_sq = float(np.sum((trace.initial_dual - saddle.dual) ** 2))
    next_duals = np.array([record.next_dual for record in trace.rounds], dtype=float).reshape(trace.round_count, saddle.dual.size)
    dual_measured = np.sum((next_duals - saddle.dual) ** 2, axis=1)
    dual_bound = dual_rate_bound_series(initial_error_sq, trace.cycles, consts)
    dual_errors = np.linalg.norm(trace.duals - saddle.dual, axis=1)
    primal_measured = np.linalg.norm(trace.cloud_states - saddle.state, axis=1)
    primal_bound = np.array(
        [primal_total_bound(int(c), float(e), consts) for c, e in zip(trace.cycles, dual_errors)]
    )
    return (
        build_report("dual", dual_measured, dual_bound),
        build_report("primal", primal_measured, primal_bound),
    )


def _initial_distance(snapshot: np.ndarray, target: np.ndarray, trace: RunTrace, essential: bool) -> float:
    distances = []
    for agent, copy in enumerate(snapshot):
        if essential:
            blocks = {agent} | set(trace.neighborhoods[agent])
            distances.append(restricted_block_max(copy - target, trace.partition, blocks))
        else:
            distances.append(block_max_norm(copy - target, trace.partition))
    return max(distances)


def round_report(
    trace: RunTrace,
    targets: InnerTargets,
    q_p: float,
    *,
    rounds: Iterable[int] | None = None,
) -> BoundReport:
    """Per-round distance of x^c_t to x_hat^t against q_p^c(t) D(k_t).

    Rounds that consumed every block are measured in the block-max norm. Rounds closed with stale
    blocks are measured in l2 against the partial-refresh bound.
    """
    n_agents = trace.agent_count
    block_diameter = targets.spec.box.block_diameter
    indices, measured, bound = [], [], []
    for index in _selected(trace, rounds):
        record = trace.rounds[index]
        if record.snapshot is None:
            continue
        target = targets(record.dual)
        distance = _initial_distance(record.snapshot, target, trace, essential=False)
        error = record.cloud_state - target
        indices.append(index)
        if record.fresh == n_agents:
            measured.append(block_max_norm(error, trace.partition))
            bound.append(primal_round_bound(record.cycles, distance, q_p))
        else:
            measured.append(float(np.linalg.norm(error)))
            bound.append(
                partial_round_bound(
                    record.fresh, n_agents - record.fresh, record.cycles, distance, q_p, block_diameter
                )
            )
    return build_report("round", measured, bound, indices)


@dataclass
class DescentReport:
    """Outcome of replaying agent copies event by event inside each round."""

    checks: int = 0
    regressions: list[tuple[int, int]] = field(default_factory=list)
    level_violations: list[tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.regressions and not self.level_violations


def _within(value: float, limit: float) -> bool:
    return value <= limit * (1.0 + LEVEL_RTOL) + LEVEL_ATOL


def descent_report(
    trace: RunTrace,
    targets: InnerTargets,
    q_p: float,
    *,
    rounds: Iterable[int] | None = None,
) -> DescentReport:
    """Rebuild every agent copy from the round snapshot and the event log.

    Two properties are checked. An update never moves an agent's own block farther from x_hat^t
    than q_p times the copy's essential block-max distance. After c completed cycles every copy
    lies within q_p^c D(k_t) of x_hat^t on its essential blocks.
    """
    if trace.events is None:
        raise ValidationError(t("error.trace.events"), field="events")
    partition = trace.partition
    essential = [sorted({agent} | set(peers)) for agent, peers in enumerate(trace.neighborhoods)]
    report = DescentReport()
    for index in _selected(trace, rounds):
        record = trace.rounds[index]
        if record.snapshot is None:
            continue
        target = targets(record.dual)
        copies = record.snapshot.copy()
        level = _initial_distance(copies, target, trace, essential=True)
        tracker = CycleTracker(trace.neighborhoods)
        tracker.restart(record.start_seq - 1)

        def distance(agent: int) -> float:
            return restricted_block_max(copies[agent] - target, partition, essential[agent])

        for event in trace.round_events(index):
            if event.kind == UPDATE:
                rows = partition.block(event.agent)
                before = distance(event.agent)
                moved = float(np.linalg.norm(event.value - target[rows]))
                report.checks += 1
                if not _within(moved, q_p * before):
                    report.regressions.append((index, event.seq))
                copies[event.agent, rows] = event.value
                tracker.on_update(event.agent, event.seq)
                touched = [event.agent]
            elif event.kind == DELIVER:
                copies[event.peer, partition.block(event.agent)] = event.value
                tracker.on_delivery(event.agent, event.peer, event.computed_seq, event.seq)
                touched = [event.peer]
            else:
                continue
            # A closed cycle moves every copy to the next level set, not just the touched one.
            candidates = range(len(copies)) if tracker.completed and tracker.completed[-1] == event.seq else touched
            limit = level * q_p ** len(tracker.completed)
            for agent in candidates:
                report.checks += 1
                if not _within(distance(agent), limit):
                    report.level_violations.append((index, event.seq))
    if not report.ok:
        logger.warning(
            "descent replay of %s: %d regressions, %d level violations",
            trace.problem, len(report.regressions), len(report.level_violations),
        )
    return report


@dataclass(frozen=True, eq=False)
class TraceCheck:
    dual: BoundReport
    primal: BoundReport
    rounds: BoundReport | None = None
    descent: DescentReport | None = None

    @property
    def ok(self) -> bool:
        parts = [self.dual.ok, self.primal.ok]
        if self.rounds is not None:
            parts.append(self.rounds.ok)
        if self.descent is not None:
            parts.append(self.descent.ok)
        return all(parts)


def check_trace_bounds(
    trace: RunTrace,
    spec: ProblemSpec,
    *,
    saddle: SaddleEstimate | None = None,
    bounds: BoundsPack | None = None,
    rounds: Iterable[int] | None = None,
    replay: bool = True,
) -> TraceCheck:
    """Every bound that applies to a stored all-fresh trace.

    `rounds` limits the per-round replays, each of which solves one inner problem per round.
    """
    _check_trace(trace, spec)
    reg, steps = trace.reg, trace.steps
    bounds = bounds if bounds is not None else compute_bounds(spec, reg.alpha)
    consts = RateConstants.from_problem(bounds, reg, steps, spec.agent_count)
    saddle = saddle if saddle is not None else solve_saddle(spec, reg, steps)
    dual, primal = rate_reports(trace, saddle, consts)
    round_check = descent = None
    if replay:
        targets = InnerTargets(spec, reg, steps.gamma)
        selected = _selected(trace, rounds)
        round_check = round_report(trace, targets, consts.q_p, rounds=selected)
        if trace.events is not None:
            descent = descent_report(trace, targets, consts.q_p, rounds=selected)
    return TraceCheck(dual, primal, round_check, descent)


@dataclass(frozen=True, eq=False)
class RoundCsvCheck:
    """Stored errors against bounds recomputed from the header constants and the cycle column.

    `mismatched` counts stored bound cells that differ from the recomputed value.
    """

    dual: BoundReport
    primal: BoundReport
    mismatched: int = 0

    @property
    def ok(self) -> bool:
        return self.dual.ok and self.primal.ok and self.mismatched == 0


def _column_mismatches(stored: np.ndarray, recomputed: np.ndarray, rtol: float) -> int:
    finite = np.isfinite(stored)
    return int(np.count_nonzero(finite & ~np.isclose(stored, recomputed, rtol=rtol, atol=0.0)))


def check_round_csv(path, rtol: float = 1e-6) -> RoundCsvCheck:
    """Re-check a per-round CSV written by a simulation run.

    The bounds are rebuilt from the rate constants in the header, so an edited bound column
    cannot hide a violation; columns left empty (NaN) are not compared.
    """
    meta, columns = read_round_csv(path)
    logger.info("checking %s (%s, seed %s)", path, meta.get("problem", "?"), meta.get("seed", "?"))
    consts = RateConstants.from_metadata(meta)
    rounds = columns["t"].astype(int)
    dual_bound, primal_bound = bound_columns(columns["dual_reg_error"], columns["cycles"].astype(int), consts)
    mismatched = _column_mismatches(columns["dual_bound"], dual_bound, rtol) + _column_mismatches(
        columns["primal_bound"], primal_bound, rtol
    )
    if mismatched:
        logger.warning("%s: %d stored bound values disagree with the recomputed bounds", path, mismatched)
    return RoundCsvCheck(
        build_report("dual", columns["dual_reg_error"], dual_bound, rounds),
        build_report("primal", columns["primal_reg_error"], primal_bound, rounds),
        mismatched,
    )
