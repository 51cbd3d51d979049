from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from ..error_handler import ValidationError
from ..i18n import t
from .spec import ProblemSpec, dual_ball_radius

logger = logging.getLogger(__name__)

CORNER_LIMIT = 12


@dataclass(frozen=True)
class BoundsPack:
    """Problem constants used by step-size rules, error bounds and rate bounds."""

    lipschitz: float
    constraint_gradient: float
    cost_gradient: float
    state_norm: float
    constraint_gradients: tuple[float, ...]
    dual_norm: float
    diameter: float
    block_diameter: float
    dual_radius: float
    alpha: float
    sampled_points: int = 0
    stabilized: bool = True

    def __post_init__(self) -> None:
        positive = {
            "lipschitz": self.lipschitz,
            "diameter": self.diameter,
            "block_diameter": self.block_diameter,
            "state_norm": self.state_norm,
        }
        for field, value in positive.items():
            if not (np.isfinite(value) and value > 0.0):
                raise ValidationError(t("error.bounds.positive", field=field, value=value), field=field)

    @property
    def combined_gradient(self) -> float:
        """M_hat = max{max_j M_gj * M_mu, M_f * M_mu}."""
        largest_constraint = max(self.constraint_gradients, default=0.0)
        return max(largest_constraint * self.dual_norm, self.cost_gradient * self.dual_norm)

    def with_lipschitz(self, lipschitz: float) -> BoundsPack:
        return replace(self, lipschitz=float(lipschitz))


class _Maxima:
    def __init__(self, constraint_count: int):
        self.lipschitz = 0.0
        self.cost_gradient = 0.0
        self.constraint_gradient = 0.0
        self.constraint_gradients = np.zeros(constraint_count)
        self.smallest_cost = np.inf

    def snapshot(self) -> np.ndarray:
        return np.concatenate(([self.lipschitz, self.cost_gradient, self.constraint_gradient], self.constraint_gradients))


def _curvature_bound(spec: ProblemSpec, state: np.ndarray, alpha: float, radius: float) -> float:
    # lambda_max is convex in mu, so its maximum over M sits at a vertex: 0 or B e_j.
    base = spec.cost_hessian(state) + alpha * np.eye(spec.dimension)
    largest = float(np.linalg.eigvalsh(base)[-1])
    for hessian in spec.constraint_hessians(state):
        if np.any(hessian):
            largest = max(largest, float(np.linalg.eigvalsh(base + radius * hessian)[-1]))
    return largest


def _absorb(spec: ProblemSpec, maxima: _Maxima, state: np.ndarray, alpha: float, radius: float, curvature: bool) -> None:
    maxima.cost_gradient = max(maxima.cost_gradient, float(np.linalg.norm(spec.cost_gradient(state))))
    maxima.smallest_cost = min(maxima.smallest_cost, spec.cost(state))
    if spec.constraint_count:
        jacobian = spec.constraint_jacobian(state)
        maxima.constraint_gradient = max(maxima.constraint_gradient, float(np.linalg.norm(jacobian, ord=2)))
        maxima.constraint_gradients = np.maximum(maxima.constraint_gradients, np.linalg.norm(jacobian, axis=1))
    if curvature:
        maxima.lipschitz = max(maxima.lipschitz, _curvature_bound(spec, state, alpha, radius))


def compute_bounds(
    spec: ProblemSpec,
    alpha: float,
    *,
    batch: int = 64,
    max_batches: int = 8,
    rel_tol: float = 1e-3,
    seed: int = 0,
) -> BoundsPack:
    """Closed form where the structure allows it, sampled maxima over X otherwise.

    Sampling evaluates the box corners (when n <= 12), the center and the Slater point, then
    random batches of `batch` points, doubling until no maximum moves by more than `rel_tol`
    relative. If `max_batches` runs out first the result carries stabilized=False.
    """
    if alpha <= 0.0:
        raise ValidationError(t("error.alpha.positive", value=alpha), field="alpha")
    box = spec.box
    radius = dual_ball_radius(spec, alpha)
    maxima = _Maxima(spec.constraint_count)
    rng = np.random.default_rng(seed)

    structured = [box.center, spec.slater_point, box.lower, box.upper]
    if box.dimension <= CORNER_LIMIT:
        structured.extend(box.corners())
    constant_curvature = spec.constant_curvature
    for position, state in enumerate(structured):
        _absorb(spec, maxima, state, alpha, radius, curvature=not constant_curvature or position == 0)
    sampled_points = len(structured)

    stabilized = False
    batch_size = batch
    for _ in range(max_batches):
        before = maxima.snapshot()
        states = box.lower + rng.random((batch_size, box.dimension)) * (box.upper - box.lower)
        for state in states:
            _absorb(spec, maxima, state, alpha, radius, curvature=not constant_curvature)
        sampled_points += batch_size
        after = maxima.snapshot()
        if np.all(after - before <= rel_tol * np.maximum(np.abs(after), 1e-12)):
            stabilized = True
            break
        batch_size *= 2
    if not stabilized:
        logger.warning("bound sampling for %s did not stabilize after %d points", spec.name, sampled_points)
    if maxima.smallest_cost < spec.cost_lower_bound:
        raise ValidationError(
            t("error.lower_bound.sampled", bound=spec.cost_lower_bound, value=maxima.smallest_cost),
            field="cost_lower_bound",
        )

    bounds = BoundsPack(
        lipschitz=maxima.lipschitz,
        constraint_gradient=maxima.constraint_gradient,
        cost_gradient=maxima.cost_gradient,
        state_norm=box.max_norm,
        constraint_gradients=tuple(float(value) for value in maxima.constraint_gradients),
        dual_norm=radius if spec.constraint_count else 0.0,
        diameter=box.diameter,
        block_diameter=box.block_diameter,
        dual_radius=radius,
        alpha=float(alpha),
        sampled_points=sampled_points,
        stabilized=stabilized,
    )
    logger.debug("bounds for %s: %s", spec.name, bounds)
    return bounds
