from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.signal import lfilter

from ..core.lagrangian import RegParams, StepSizes
from ..core.parameters import contraction_qp, dual_rate_constants
from ..error_handler import ConfigError, DimensionError, ValidationError
from ..i18n import t
from ..problem.bounds import BoundsPack

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("t", "measured", "bound", "slack", "violated")
METADATA_FIELDS = ("q_p", "q_d", "agent_count", "constraint_gradient", "block_diameter", "diameter", "rho", "alpha")


def _dimension_message(field: str, expected: int, actual: int) -> str:
    return t("error.dimension", field=field, expected=expected, actual=actual)


@dataclass(frozen=True)
class RateConstants:
    """Constants entering the asynchronous rate bounds.

    `block_diameter` is the largest diameter of a single X_i and `diameter` the diameter of X.
    """

    q_p: float
    q_d: float
    agent_count: int
    constraint_gradient: float
    block_diameter: float
    diameter: float
    rho: float
    alpha: float

    def __post_init__(self) -> None:
        for field in ("q_p", "q_d"):
            value = getattr(self, field)
            if not 0.0 < value < 1.0:
                raise ValidationError(t("error.rate.contraction", field=field, value=value), field=field)
        if self.agent_count < 1:
            raise ValidationError(t("error.positive", field="agent_count", value=self.agent_count), field="agent_count")

    def as_metadata(self) -> dict[str, float | int]:
        return {name: getattr(self, name) for name in METADATA_FIELDS}

    @classmethod
    def from_metadata(cls, meta: Mapping[str, str]) -> RateConstants:
        """Constants from `key=value` header lines; ConfigError names any missing or unparsable key."""
        missing = [name for name in METADATA_FIELDS if name not in meta]
        if missing:
            raise ConfigError(t("error.trace.metadata", keys=", ".join(missing)), field="trace")
        values: dict[str, float | int] = {}
        for name in METADATA_FIELDS:
            try:
                values[name] = int(meta[name]) if name == "agent_count" else float(meta[name])
            except ValueError as exc:
                raise ConfigError(t("error.config.bad_value", field=name, value=meta[name]), field="trace") from exc
        return cls(**values)

    @classmethod
    def from_problem(cls, bounds: BoundsPack, reg: RegParams, steps: StepSizes, agent_count: int) -> RateConstants:
        _, q_d = dual_rate_constants(steps.rho, reg.beta, reg.alpha, bounds.constraint_gradient)
        return cls(
            q_p=contraction_qp(steps.gamma, reg.alpha, bounds.lipschitz),
            q_d=q_d,
            agent_count=agent_count,
            constraint_gradient=bounds.constraint_gradient,
            block_diameter=bounds.block_diameter,
            diameter=bounds.diameter,
            rho=steps.rho,
            alpha=reg.alpha,
        )


def primal_round_bound(cycles: int, initial_distance: float, q_p: float) -> float:
    """q_p^c D(k_t): block-max distance of x^c_t to the inner minimizer after c cycles."""
    if cycles < 0:
        raise ValidationError(t("error.positive", field="cycles", value=cycles), field="cycles")
    if initial_distance < 0.0:
        raise ValidationError(t("error.positive", field="D", value=initial_distance), field="D")
    if not 0.0 < q_p < 1.0:
        raise ValidationError(t("error.rate.contraction", field="q_p", value=q_p), field="q_p")
    return initial_distance * q_p**cycles


def _error_terms(cycles: np.ndarray, consts: RateConstants) -> np.ndarray:
    n = consts.agent_count
    mg_sq = consts.constraint_gradient**2
    lx = consts.block_diameter
    decay = consts.q_p ** np.asarray(cycles, dtype=float)
    return (
        consts.q_d * n * mg_sq * lx**2 * decay**2
        + 2.0 * math.sqrt(n) * consts.rho**2 * mg_sq * lx * consts.diameter * decay
    )


def dual_rate_bound(
    round_index: int, initial_error_sq: float, cycles: Sequence[int], consts: RateConstants
) -> float:
    """Right-hand side of the squared dual error bound for mu(t+1), evaluated term by term."""
    if len(cycles) != round_index + 1:
        raise DimensionError(_dimension_message("cycles", round_index + 1, len(cycles)), field="cycles")
    terms = _error_terms(np.asarray(cycles), consts)
    weights = consts.q_d ** np.arange(round_index, -1, -1, dtype=float)
    return float(consts.q_d ** (round_index + 1) * initial_error_sq + weights @ terms)


def dual_rate_bound_series(initial_error_sq: float, cycles: Sequence[int], consts: RateConstants) -> np.ndarray:
    """Bound for every t at once through b(t) = q_d b(t-1) + e(t), b(-1) = |mu(0) - mu_hat|^2."""
    terms = _error_terms(np.asarray(cycles), consts)
    if terms.size == 0:
        return terms
    series, _ = lfilter([1.0], [1.0, -consts.q_d], terms, zi=[consts.q_d * initial_error_sq])
    return series


def primal_total_bound(cycles: int, dual_error: float, consts: RateConstants) -> float:
    """q_p^c sqrt(N) L_x + (M_g / alpha) |mu(t) - mu_hat|."""
    return float(
        consts.q_p**cycles * math.sqrt(consts.agent_count) * consts.block_diameter
        + consts.constraint_gradient / consts.alpha * dual_error
    )


def bound_columns(
    dual_errors: Sequence[float], cycles: Sequence[int], consts: RateConstants
) -> tuple[np.ndarray, np.ndarray]:
    """Per-row bounds on |mu(t) - mu_hat| and |x^c_t - x_hat| from the dual errors and cycle counts.

    Row 0 of the dual column is the initial error itself; row t > 0 bounds mu(t) through the
    squared series of the previous round.
    """
    dual_errors = np.asarray(dual_errors, dtype=float)
    cycles = np.asarray(cycles, dtype=int)
    if dual_errors.shape != cycles.shape:
        raise DimensionError(_dimension_message("cycles", dual_errors.size, cycles.size), field="cycles")
    if dual_errors.size == 0:
        return np.zeros(0), np.zeros(0)
    series = dual_rate_bound_series(float(dual_errors[0]) ** 2, cycles, consts)
    dual_column = np.concatenate((dual_errors[:1], np.sqrt(series[:-1])))
    primal_column = np.array([primal_total_bound(int(c), float(e), consts) for c, e in zip(cycles, dual_errors)])
    return dual_column, primal_column


def partial_round_bound(
    fresh: int, stale: int, cycles: int, initial_distance: float, q_p: float, block_diameter: float
) -> float:
    """l2 bound on x^c_t - x_hat^t when only `fresh` of the blocks were refreshed this round."""
    if fresh < 1 or stale < 0:
        raise ValidationError(t("error.rate.fresh", fresh=fresh, stale=stale), field="fresh")
    return math.sqrt(
        fresh * primal_round_bound(cycles, initial_distance, q_p) ** 2 + stale * block_diameter**2
    )


@dataclass(frozen=True, eq=False)
class BoundReport:
    name: str
    rounds: np.ndarray
    measured: np.ndarray
    bound: np.ndarray
    atol: float = 1e-9

    @property
    def slack(self) -> np.ndarray:
        return self.bound - self.measured

    @property
    def violated(self) -> np.ndarray:
        return self.measured > self.bound * (1.0 + 1e-9) + self.atol

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.violated))

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def write_csv(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(REPORT_COLUMNS)
            for row in zip(self.rounds, self.measured, self.bound, self.slack, self.violated):
                writer.writerow((int(row[0]), repr(float(row[1])), repr(float(row[2])), repr(float(row[3])), int(row[4])))
        return path


def build_report(name: str, measured, bound, rounds=None, atol: float = 1e-9) -> BoundReport:
    measured = np.asarray(measured, dtype=float)
    bound = np.asarray(bound, dtype=float)
    if measured.shape != bound.shape:
        raise DimensionError(_dimension_message("bound", measured.size, bound.size), field="bound")
    rounds = np.arange(measured.size) if rounds is None else np.asarray(rounds, dtype=int)
    report = BoundReport(name, rounds, measured, bound, atol)
    if not report.ok:
        first = int(report.rounds[np.argmax(report.violated)])
        logger.warning("%s: %d violations, first at round %d", name, report.violations, first)
    return report
