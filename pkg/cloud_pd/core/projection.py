from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..error_handler import ValidationError, check_dimension
from ..i18n import t
from ..problem.spec import BoxSet


@dataclass(frozen=True)
class DualBall:
    """M = {mu >= 0 : ||mu||_1 <= radius} in R^dimension."""

    radius: float
    dimension: int

    def __post_init__(self) -> None:
        if not self.radius > 0.0:
            raise ValidationError(t("error.dual_ball.radius", value=self.radius), field="radius")

    def contains(self, dual: np.ndarray, atol: float = 1e-12) -> bool:
        dual = np.asarray(dual, dtype=float)
        return bool(np.all(dual >= -atol) and dual.sum() <= self.radius + atol)


def project_box(vector: np.ndarray, box: BoxSet) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    check_dimension("vector", vector, box.dimension)
    return box.project(vector)


def project_dual_ball(vector: np.ndarray, ball: DualBall) -> np.ndarray:
    """Exact Euclidean projection onto the nonnegative l1 ball by sorted thresholding."""
    vector = np.asarray(vector, dtype=float)
    check_dimension("vector", vector, ball.dimension)
    positive = np.maximum(vector, 0.0)
    if positive.sum() <= ball.radius:
        return positive
    # The projection is max(v - theta, 0) with theta > 0 chosen so the result sums to B.
    ordered = np.sort(positive)[::-1]
    cumulative = np.cumsum(ordered) - ball.radius
    ranks = np.arange(1, ordered.size + 1)
    active = np.nonzero(ordered - cumulative / ranks > 0.0)[0][-1]
    threshold = cumulative[active] / (active + 1.0)
    return np.maximum(vector - threshold, 0.0)
