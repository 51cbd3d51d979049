from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, nnls

from .core.lagrangian import (
    RegParams,
    StepSizes,
    dual_ball_for,
    dual_step,
    grad_x_reg,
    reg_lagrangian,
)
from .core.projection import DualBall, project_dual_ball
from .error_handler import StepSizeError, ValidationError, check_dimension
from .i18n import t
from .problem.bounds import compute_bounds
from .problem.spec import ProblemSpec

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 10**7
ACTIVE_TOL = 1e-7


@dataclass(frozen=True)
class SaddleEstimate:
    state: np.ndarray
    dual: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _check_steps(steps: StepSizes) -> None:
    if not steps.gamma > 0.0:
        raise StepSizeError(t("error.step.positive", field="gamma", value=steps.gamma), field="gamma")
    if not steps.rho > 0.0:
        raise StepSizeError(t("error.step.positive", field="rho", value=steps.rho), field="rho")


def sync_step(
    state: np.ndarray,
    dual: np.ndarray,
    spec: ProblemSpec,
    reg: RegParams,
    steps: StepSizes,
    ball: DualBall | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One Jacobi primal-dual projection step; both halves read the same (x, mu)."""
    _check_steps(steps)
    ball = ball if ball is not None else dual_ball_for(spec, reg)
    gradient = grad_x_reg(state, dual, spec, reg)
    next_state = spec.box.project(state - steps.gamma * gradient)
    next_dual = dual_step(dual, spec.constraint_values(state), steps.rho, reg.beta, ball)
    return next_state, next_dual


def _residual(state, dual, next_state, next_dual) -> float:
    return float(np.sqrt(np.sum((state - next_state) ** 2) + np.sum((dual - next_dual) ** 2)))


def _default_steps(spec: ProblemSpec, reg: RegParams) -> StepSizes:
    return StepSizes.recommended(compute_bounds(spec, reg.alpha), reg)


def _lifted_warm_start(spec: ProblemSpec, reg: RegParams, ball: DualBall) -> tuple[np.ndarray, np.ndarray]:
    # min f + a/2|x|^2 + b/2|mu|^2 s.t. g(x) <= b mu, mu >= 0 has the regularized saddle as its
    # solution whenever the l1 cap of M is inactive, and stays well conditioned for tiny beta.
    n, m = spec.dimension, spec.constraint_count
    alpha, beta = reg.alpha, reg.beta

    def objective(z: np.ndarray) -> float:
        return spec.cost(z[:n]) + 0.5 * alpha * z[:n] @ z[:n] + 0.5 * beta * z[n:] @ z[n:]

    def gradient(z: np.ndarray) -> np.ndarray:
        return np.concatenate((spec.cost_gradient(z[:n]) + alpha * z[:n], beta * z[n:]))

    constraints = []
    if m:
        constraints.append(
            {
                "type": "ineq",
                "fun": lambda z: beta * z[n:] - spec.constraint_values(z[:n]),
                "jac": lambda z: np.hstack((-spec.constraint_jacobian(z[:n]), beta * np.eye(m))),
            }
        )
    variable_bounds = list(zip(spec.box.lower, spec.box.upper)) + [(0.0, None)] * m
    start = np.concatenate((spec.slater_point, np.zeros(m)))
    result = minimize(
        objective,
        start,
        jac=gradient,
        method="SLSQP",
        bounds=variable_bounds,
        constraints=constraints,
        options={"ftol": 1e-15, "maxiter": 2000},
    )
    if not result.success:
        logger.debug("SLSQP warm start for %s: %s", spec.name, result.message)
    state = spec.box.project(result.x[:n])
    if not m:
        return state, np.zeros(0)
    return state, project_dual_ball(spec.constraint_values(state) / beta, ball)


def solve_saddle(
    spec: ProblemSpec,
    reg: RegParams,
    steps: StepSizes | None = None,
    tol: float = 1e-10,
    max_iters: int = DEFAULT_MAX_ITERS,
    *,
    warm_start: bool = True,
) -> SaddleEstimate:
    """Iterate sync_step until the one-step fixed-point residual drops below tol."""
    if not tol > 0.0:
        raise ValidationError(t("error.positive", field="tol", value=tol), field="tol")
    steps = steps if steps is not None else _default_steps(spec, reg)
    _check_steps(steps)
    ball = dual_ball_for(spec, reg)
    if warm_start:
        state, dual = _lifted_warm_start(spec, reg, ball)
    else:
        state, dual = spec.slater_point.copy(), np.zeros(spec.constraint_count)

    residual = np.inf
    for iteration in range(max_iters + 1):
        next_state, next_dual = sync_step(state, dual, spec, reg, steps, ball)
        residual = _residual(state, dual, next_state, next_dual)
        if residual < tol:
            logger.debug("saddle of %s certified after %d steps, residual %.3e", spec.name, iteration, residual)
            return SaddleEstimate(state, dual, residual, iteration, True)
        if iteration == max_iters:
            break
        state, dual = next_state, next_dual
    logger.warning("saddle of %s not certified: residual %.3e after %d steps", spec.name, residual, max_iters)
    return SaddleEstimate(state, dual, residual, max_iters, False)


def inner_target(
    spec: ProblemSpec,
    reg: RegParams,
    dual: np.ndarray,
    tol: float = 1e-10,
    *,
    gamma: float | None = None,
    max_iters: int = 10**6,
) -> SaddleEstimate:
    """argmin over X of L_reg(., mu), certified as a fixed point of the projected gradient map."""
    dual = np.asarray(dual, dtype=float)
    check_dimension("mu", dual, spec.constraint_count)
    if gamma is None:
        gamma = _default_steps(spec, reg).gamma

    result = minimize(
        lambda x: reg_lagrangian(x, dual, spec, reg),
        spec.box.project(spec.slater_point),
        jac=lambda x: grad_x_reg(x, dual, spec, reg),
        method="L-BFGS-B",
        bounds=list(zip(spec.box.lower, spec.box.upper)),
        options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-12},
    )
    state = spec.box.project(result.x)
    residual = np.inf
    for iteration in range(max_iters + 1):
        next_state = spec.box.project(state - gamma * grad_x_reg(state, dual, spec, reg))
        residual = float(np.linalg.norm(state - next_state))
        if residual < tol:
            return SaddleEstimate(state, dual.copy(), residual, iteration, True)
        if iteration == max_iters:
            break
        state = next_state
    logger.warning("inner target of %s not certified: residual %.3e", spec.name, residual)
    return SaddleEstimate(state, dual.copy(), residual, max_iters, False)


def reference_solution(spec: ProblemSpec, tol: float = 1e-6) -> SaddleEstimate:
    """Unregularized primal-dual solution (x_hat, mu_hat) of min f s.t. g <= 0, x in X."""
    m = spec.constraint_count
    constraints = []
    if m:
        constraints.append(
            {
                "type": "ineq",
                "fun": lambda x: -spec.constraint_values(x),
                "jac": lambda x: -spec.constraint_jacobian(x),
            }
        )
    result = minimize(
        spec.cost,
        spec.slater_point,
        jac=spec.cost_gradient,
        method="SLSQP",
        bounds=list(zip(spec.box.lower, spec.box.upper)),
        constraints=constraints,
        options={"ftol": 1e-15, "maxiter": 2000},
    )
    state = spec.box.project(result.x)
    gradient = spec.cost_gradient(state)
    dual = np.zeros(m)
    if m:
        values = spec.constraint_values(state)
        active = np.nonzero(values > -ACTIVE_TOL)[0]
        free = np.nonzero((state > spec.box.lower + ACTIVE_TOL) & (state < spec.box.upper - ACTIVE_TOL))[0]
        if active.size and free.size:
            jacobian = spec.constraint_jacobian(state)
            multipliers, _ = nnls(jacobian[np.ix_(active, free)].T, -gradient[free])
            dual[active] = multipliers

    lagrangian_gradient = gradient + (spec.constraint_jacobian(state).T @ dual if m else 0.0)
    stationarity = float(np.linalg.norm(state - spec.box.project(state - lagrangian_gradient)))
    feasibility = float(np.max(spec.constraint_values(state), initial=0.0)) if m else 0.0
    complementarity = float(abs(dual @ spec.constraint_values(state))) if m else 0.0
    residual = max(stationarity, feasibility, complementarity)
    converged = bool(result.success) and residual < tol
    if not converged:
        logger.warning("reference solution of %s: residual %.3e (%s)", spec.name, residual, result.message)
    return SaddleEstimate(state, dual, residual, int(result.nit), converged)
