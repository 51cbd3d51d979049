"""Two-agent problem run with agents holding different dual values.

Agent 1 always uses the newest dual value while agent 2 lags one mode behind. The alternation
between a mode of interleaved single steps and a mode of inner fixed-point solves keeps the
iterates oscillating; the same problem with a shared dual value converges.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..analysis.oscillation import OscillationReport, detect_oscillation
from ..core.lagrangian import RegParams, StepSizes
from ..error_handler import ValidationError
from ..i18n import t
from ..problem.families import counterexample_problem
from ..problem.spec import dual_ball_radius, essential_neighborhoods
from ..sim.engine import run_async
from ..sim.schedule import lockstep_schedule
from ..sim.trace import RunTrace
from ..solver import solve_saddle

logger = logging.getLogger(__name__)

OUTER_COLUMNS = ("outer", "x1", "x2", "mu", "mu_old")
INNER_COLUMNS = ("outer", "mode", "step", "x1", "x2", "mu", "mu_old")


@dataclass(frozen=True)
class CounterexampleConfig:
    alpha: float = 0.01
    beta: float = 0.01
    gamma: float = 0.002
    rho: float = 0.0003
    outer_iterations: int = 10
    mode1_iterations: int = 500
    mode2_iterations: int = 1500
    inner_tolerance: float = 1e-5
    max_inner_steps: int = 1_000_000

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma", "rho", "inner_tolerance"):
            if not getattr(self, name) > 0.0:
                raise ValidationError(t("error.positive", field=name, value=getattr(self, name)), field=name)
        for name in ("outer_iterations", "mode1_iterations", "mode2_iterations", "max_inner_steps"):
            if getattr(self, name) < 1:
                raise ValidationError(t("error.positive", field=name, value=getattr(self, name)), field=name)


@dataclass(frozen=True, eq=False)
class CounterexampleTrace:
    """(x1, x2, mu, mu_old) at the end of every outer iteration, plus optional per-step samples."""

    config: CounterexampleConfig
    dual_radius: float
    outer: np.ndarray
    inner: np.ndarray | None
    inner_steps: int

    @property
    def states(self) -> np.ndarray:
        return self.outer[:, :2]

    @property
    def duals(self) -> np.ndarray:
        return self.outer[:, 2]

    def oscillation(self, window: int = 3) -> OscillationReport:
        return detect_oscillation(self.outer[:, :3], window)


class CounterexampleUpdates:
    """Scalar update maps of the two agents and the cloud; plain floats keep the inner loops fast."""

    def __init__(self, config: CounterexampleConfig, radius: float):
        self.alpha = config.alpha
        self.beta = config.beta
        self.gamma = config.gamma
        self.rho = config.rho
        self.radius = radius

    @staticmethod
    def _clip(value: float, lower: float, upper: float) -> float:
        return lower if value < lower else upper if value > upper else value

    def theta_1(self, x1: float, x2: float, mu: float) -> float:
        return self._clip(x1 - self.gamma * (0.1 + self.alpha * x1 + mu * (x1 - x2)), 0.0, 5.0)

    def theta_2(self, x1: float, x2: float, mu: float) -> float:
        return self._clip(x2 - self.gamma * (-0.1 + self.alpha * x2 + mu * (x2 - x1)), 0.0, 5.0)

    def theta_m(self, x1: float, x2: float, mu: float) -> float:
        violation = 0.5 * (x1 - x2) ** 2 - 0.2
        return self._clip(mu + self.rho * (violation - self.beta * mu), 0.0, self.radius)


def counterexample_updates(config: CounterexampleConfig | None = None) -> CounterexampleUpdates:
    config = config or CounterexampleConfig()
    return CounterexampleUpdates(config, dual_ball_radius(counterexample_problem(), config.alpha))


def run_counterexample(config: CounterexampleConfig | None = None, *, record_inner: bool = False) -> CounterexampleTrace:
    """Alternate the interleaved mode and the fixed-point mode with a lagging dual for agent 2."""
    config = config or CounterexampleConfig()
    updates = counterexample_updates(config)
    x1 = x2 = mu = mu_old = 0.0
    outer_rows: list[tuple[float, float, float, float]] = []
    inner_rows: list[tuple[int, int, int, float, float, float, float]] = []
    inner_steps = 0

    def settle(step, current: float) -> float:
        nonlocal inner_steps
        for _ in range(config.max_inner_steps):
            following = step(current)
            if abs(current - following) <= config.inner_tolerance:
                return current
            current = following
            inner_steps += 1
        logger.warning("inner fixed point not reached within %d steps", config.max_inner_steps)
        return current

    for outer in range(config.outer_iterations):
        for step in range(config.mode1_iterations):
            x2 = updates.theta_2(x1, x2, mu_old)
            x1 = updates.theta_1(x1, x2, mu)
            mu = updates.theta_m(x1, x2, mu)
            if record_inner:
                inner_rows.append((outer, 1, step, x1, x2, mu, mu_old))
        mu_old = mu
        for step in range(config.mode2_iterations):
            x1 = settle(lambda value: updates.theta_1(value, x2, mu), x1)
            x2 = settle(lambda value: updates.theta_2(x1, value, mu_old), x2)
            mu = updates.theta_m(x1, x2, mu)
            if record_inner:
                inner_rows.append((outer, 2, step, x1, x2, mu, mu_old))
        mu_old = mu
        outer_rows.append((x1, x2, mu, mu_old))
        logger.debug("outer %d: x=(%.4f, %.4f) mu=%.5f", outer, x1, x2, mu)

    trace = CounterexampleTrace(
        config=config,
        dual_radius=updates.radius,
        outer=np.array(outer_rows),
        inner=np.array(inner_rows) if record_inner else None,
        inner_steps=inner_steps,
    )
    logger.info("counterexample finished: %d outer samples, %d inner steps", len(outer_rows), inner_steps)
    return trace


def run_synchronized_counterexample(
    config: CounterexampleConfig | None = None,
    *,
    rounds: int = 200_000,
    tolerance: float = 1e-6,
) -> RunTrace:
    """Same problem, steps and regularization through the simulator, where the dual value is shared."""
    config = config or CounterexampleConfig()
    spec = counterexample_problem()
    reg = RegParams(config.alpha, config.beta)
    steps = StepSizes(config.gamma, config.rho)
    saddle = solve_saddle(spec, reg, steps)
    schedule = lockstep_schedule(essential_neighborhoods(spec), rounds)
    return run_async(
        spec,
        reg,
        steps,
        schedule,
        np.zeros(spec.dimension),
        np.zeros(spec.constraint_count),
        record_snapshots=False,
        reference=saddle,
        tolerance=tolerance,
    )


def write_counterexample_csv(trace: CounterexampleTrace, out_dir: Path | str) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    outer_path = out_dir / "counterexample.csv"
    with outer_path.open("w", newline="", encoding="utf-8") as handle:
        handle.write(f"# alpha={trace.config.alpha!r}\n# beta={trace.config.beta!r}\n")
        handle.write(f"# gamma={trace.config.gamma!r}\n# rho={trace.config.rho!r}\n# dual_radius={trace.dual_radius!r}\n")
        writer = csv.writer(handle)
        writer.writerow(OUTER_COLUMNS)
        for index, row in enumerate(trace.outer, start=1):
            writer.writerow([index, *(repr(float(value)) for value in row)])
    written.append(outer_path)
    if trace.inner is not None:
        inner_path = out_dir / "counterexample_inner.csv"
        with inner_path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(INNER_COLUMNS)
            for row in trace.inner:
                writer.writerow([int(row[0]) + 1, int(row[1]), int(row[2]), *(repr(float(value)) for value in row[3:])])
        written.append(inner_path)
    for path in written:
        logger.info("wrote %s", path)
    return written
