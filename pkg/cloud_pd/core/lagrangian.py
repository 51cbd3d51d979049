from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..error_handler import StepSizeError, ValidationError, check_dimension
from ..i18n import t
from ..problem.bounds import BoundsPack
from ..problem.spec import ProblemSpec, dual_ball_radius
from .projection import DualBall, project_dual_ball


@dataclass(frozen=True)
class RegParams:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not self.alpha > 0.0:
            raise ValidationError(t("error.alpha.positive", value=self.alpha), field="alpha")
        if not self.beta > 0.0:
            raise ValidationError(t("error.beta.positive", value=self.beta), field="beta")

    def validate(self, bounds: BoundsPack) -> None:
        if self.alpha >= bounds.lipschitz:
            raise ValidationError(
                t("error.alpha.lipschitz", value=self.alpha, lipschitz=bounds.lipschitz), field="alpha"
            )


@dataclass(frozen=True)
class StepSizes:
    gamma: float
    rho: float

    def validate(self, bounds: BoundsPack, reg: RegParams) -> None:
        from .parameters import dual_rate_constants

        if not 0.0 < self.gamma < 2.0 / bounds.lipschitz:
            raise StepSizeError(
                t("error.step.gamma", value=self.gamma, limit=2.0 / bounds.lipschitz), field="gamma"
            )
        rho_max, _ = dual_rate_constants(self.rho, reg.beta, reg.alpha, bounds.constraint_gradient)
        if not 0.0 < self.rho < rho_max:
            raise StepSizeError(t("error.step.rho", value=self.rho, limit=rho_max), field="rho")

    @classmethod
    def recommended(cls, bounds: BoundsPack, reg: RegParams, dual_fraction: float = 0.9) -> StepSizes:
        """gamma = 2/(L_p + alpha) minimizes q_p; rho is a fixed fraction of rho_0."""
        from .parameters import dual_rate_constants

        if not 0.0 < dual_fraction < 1.0:
            raise StepSizeError(t("error.step.fraction", value=dual_fraction), field="dual_step_fraction")
        rho_max, _ = dual_rate_constants(1.0, reg.beta, reg.alpha, bounds.constraint_gradient)
        return cls(gamma=2.0 / (bounds.lipschitz + reg.alpha), rho=dual_fraction * rho_max)


def dual_ball_for(spec: ProblemSpec, reg: RegParams) -> DualBall:
    return DualBall(dual_ball_radius(spec, reg.alpha), spec.constraint_count)


def _check_point(state: np.ndarray, dual: np.ndarray, spec: ProblemSpec) -> None:
    check_dimension("x", state, spec.dimension)
    check_dimension("mu", dual, spec.constraint_count)


def reg_lagrangian(state: np.ndarray, dual: np.ndarray, spec: ProblemSpec, reg: RegParams) -> float:
    state = np.asarray(state, dtype=float)
    dual = np.asarray(dual, dtype=float)
    _check_point(state, dual, spec)
    return float(
        spec.cost(state)
        + 0.5 * reg.alpha * state @ state
        + dual @ spec.constraint_values(state)
        - 0.5 * reg.beta * dual @ dual
    )


def partial_grad_x_reg(
    state: np.ndarray, dual: np.ndarray, spec: ProblemSpec, reg: RegParams, agent: int
) -> np.ndarray:
    """Block `agent` of grad_x L_reg; reads only that agent's block and its essential neighbors."""
    rows = spec.block(agent)
    return (
        spec.partial_cost_gradient(state, agent)
        + reg.alpha * state[rows]
        + spec.constraints.partial_jacobian(state, rows).T @ dual
    )


def grad_x_reg(state: np.ndarray, dual: np.ndarray, spec: ProblemSpec, reg: RegParams) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    dual = np.asarray(dual, dtype=float)
    _check_point(state, dual, spec)
    return np.concatenate([partial_grad_x_reg(state, dual, spec, reg, agent) for agent in range(spec.agent_count)])


def grad_mu_reg(state: np.ndarray, dual: np.ndarray, spec: ProblemSpec, reg: RegParams | float) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    dual = np.asarray(dual, dtype=float)
    _check_point(state, dual, spec)
    beta = reg.beta if isinstance(reg, RegParams) else float(reg)
    return spec.constraint_values(state) - beta * dual


def dual_step(
    dual: np.ndarray, constraint_values: np.ndarray, rho: float, beta: float, ball: DualBall
) -> np.ndarray:
    """Pi_M[mu + rho (g - beta mu)], shared by the synchronous map and the cloud."""
    return project_dual_ball(dual + rho * (constraint_values - beta * dual), ball)
