from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..error_handler import StepSizeError, ValidationError
from ..i18n import t
from ..problem.bounds import BoundsPack
from .lagrangian import RegParams

SAFETY_FACTOR = 0.9


def contraction_qp(gamma: float, alpha: float, lipschitz: float) -> float:
    """Per-update primal contraction factor max{|1 - gamma alpha|, |1 - gamma L_p|}."""
    if not 0.0 < alpha < lipschitz:
        raise ValidationError(t("error.alpha.lipschitz", value=alpha, lipschitz=lipschitz), field="alpha")
    if not 0.0 < gamma < 2.0 / lipschitz:
        raise StepSizeError(t("error.step.gamma", value=gamma, limit=2.0 / lipschitz), field="gamma")
    return max(abs(1.0 - gamma * alpha), abs(1.0 - gamma * lipschitz))


def optimal_contraction(alpha: float, lipschitz: float) -> float:
    return (lipschitz - alpha) / (lipschitz + alpha)


def dual_rate_constants(rho: float, beta: float, alpha: float, constraint_gradient: float) -> tuple[float, float]:
    """(rho_0, q_d) with q_d = (1 - rho beta)^2 + rho^2."""
    for field, value in (("rho", rho), ("beta", beta), ("alpha", alpha)):
        if not value > 0.0:
            raise ValidationError(t("error.positive", field=field, value=value), field=field)
    if constraint_gradient < 0.0:
        raise ValidationError(t("error.positive", field="M_g", value=constraint_gradient), field="M_g")
    rho_max = min(
        2.0 * alpha / (constraint_gradient**2 + 2.0 * alpha * beta),
        2.0 * beta / (1.0 + beta**2),
    )
    return rho_max, (1.0 - rho * beta) ** 2 + rho**2


def choose_reg_params(epsilon: float, bounds: BoundsPack, safety: float = SAFETY_FACTOR) -> RegParams:
    """alpha = safety * 2 eps / (M_hat + M_x^2), beta = alpha^3 / 2."""
    if not epsilon > 0.0:
        raise ValidationError(t("error.positive", field="epsilon", value=epsilon), field="epsilon")
    alpha = safety * 2.0 * epsilon / (bounds.combined_gradient + bounds.state_norm**2)
    return RegParams(alpha=alpha, beta=alpha**3 / 2.0)


@dataclass(frozen=True)
class RegularizationErrorBounds:
    cost: float
    violations: tuple[float, ...]

    @property
    def max_violation(self) -> float:
        return max(self.violations, default=0.0)


def error_bounds(reg: RegParams, bounds: BoundsPack) -> RegularizationErrorBounds:
    """A priori cost error and per-constraint violation caused by regularizing."""
    scale = math.sqrt(reg.beta / (2.0 * reg.alpha))
    cost = bounds.cost_gradient * bounds.dual_norm * scale + 0.5 * reg.alpha * bounds.state_norm**2
    violations = tuple(float(value) * bounds.dual_norm * scale for value in np.asarray(bounds.constraint_gradients))
    return RegularizationErrorBounds(cost=float(cost), violations=violations)
