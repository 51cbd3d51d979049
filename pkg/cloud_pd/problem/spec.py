from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import ClassVar, Iterable, Protocol, Union

import numpy as np

from ..analysis.norms import BlockPartition
from ..error_handler import DimensionError, SlaterViolationError, ValidationError, check_dimension
from ..i18n import t

logger = logging.getLogger(__name__)


class LocalCost(Protocol):
    constant_hessian: ClassVar[bool]

    def value(self, block: np.ndarray) -> float: ...

    def gradient(self, block: np.ndarray) -> np.ndarray: ...

    def hessian(self, block: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class LinearCost:
    slope: np.ndarray

    constant_hessian: ClassVar[bool] = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "slope", np.atleast_1d(np.asarray(self.slope, dtype=float)))

    def value(self, block: np.ndarray) -> float:
        return float(self.slope @ block)

    def gradient(self, block: np.ndarray) -> np.ndarray:
        return self.slope.copy()

    def hessian(self, block: np.ndarray) -> np.ndarray:
        return np.zeros((self.slope.size, self.slope.size))


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """0.5 x'Qx + q'x on one block."""

    matrix: np.ndarray
    linear: np.ndarray

    constant_hessian: ClassVar[bool] = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", np.atleast_2d(np.asarray(self.matrix, dtype=float)))
        object.__setattr__(self, "linear", np.atleast_1d(np.asarray(self.linear, dtype=float)))

    def value(self, block: np.ndarray) -> float:
        return float(0.5 * block @ self.matrix @ block + self.linear @ block)

    def gradient(self, block: np.ndarray) -> np.ndarray:
        return self.matrix @ block + self.linear

    def hessian(self, block: np.ndarray) -> np.ndarray:
        return self.matrix.copy()


@dataclass(frozen=True, eq=False)
class LogUtility:
    """-w * sum(log(1 + x)), the negated concave utility of a flow rate."""

    weight: float
    size: int = 1

    constant_hessian: ClassVar[bool] = False

    def value(self, block: np.ndarray) -> float:
        return float(-self.weight * np.sum(np.log1p(block)))

    def gradient(self, block: np.ndarray) -> np.ndarray:
        return -self.weight / (1.0 + block)

    def hessian(self, block: np.ndarray) -> np.ndarray:
        return np.diag(self.weight / (1.0 + block) ** 2)


@dataclass(frozen=True, eq=False)
class QuadraticCoupling:
    """c(x) = 0.5 x'Px + q'x over the whole state."""

    matrix: np.ndarray
    linear: np.ndarray | None = None

    constant_hessian: ClassVar[bool] = True

    def __post_init__(self) -> None:
        matrix = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if matrix.shape[0] != matrix.shape[1] or not np.allclose(matrix, matrix.T):
            raise ValidationError(t("error.coupling.symmetric"), field="coupling")
        linear = np.zeros(matrix.shape[0]) if self.linear is None else np.asarray(self.linear, dtype=float)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "linear", linear)

    @classmethod
    def zero(cls, dimension: int) -> QuadraticCoupling:
        return cls(np.zeros((dimension, dimension)))

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def value(self, state: np.ndarray) -> float:
        return float(0.5 * state @ self.matrix @ state + self.linear @ state)

    def gradient(self, state: np.ndarray) -> np.ndarray:
        return self.matrix @ state + self.linear

    def partial_gradient(self, state: np.ndarray, rows: slice) -> np.ndarray:
        return self.matrix[rows] @ state + self.linear[rows]

    def hessian(self, state: np.ndarray) -> np.ndarray:
        return self.matrix


@dataclass(frozen=True, eq=False)
class AffineConstraints:
    """g(x) = Ax - b."""

    matrix: np.ndarray
    offset: np.ndarray

    constant_hessian: ClassVar[bool] = True
    constant_jacobian: ClassVar[bool] = True

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2:
            raise DimensionError(t("error.constraints.shape"), field="constraints")
        offset = np.atleast_1d(np.asarray(self.offset, dtype=float))
        if matrix.shape[0] == 0:
            offset = np.zeros(0)
        check_dimension("offset", offset, matrix.shape[0])
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def none(cls, dimension: int) -> AffineConstraints:
        return cls(np.zeros((0, dimension)), np.zeros(0))

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def values(self, state: np.ndarray) -> np.ndarray:
        return self.matrix @ state - self.offset

    def jacobian(self, state: np.ndarray) -> np.ndarray:
        return self.matrix

    def partial_jacobian(self, state: np.ndarray, cols: slice) -> np.ndarray:
        return self.matrix[:, cols]

    def hessians(self, state: np.ndarray) -> np.ndarray:
        return np.zeros((self.count, self.dimension, self.dimension))


@dataclass(frozen=True, eq=False)
class QuadraticConstraints:
    """g_j(x) = 0.5 x'Q_j x + a_j'x + c_j with every Q_j positive semidefinite."""

    quadratics: np.ndarray
    linear: np.ndarray
    constants: np.ndarray

    constant_hessian: ClassVar[bool] = True
    constant_jacobian: ClassVar[bool] = False

    def __post_init__(self) -> None:
        quadratics = np.asarray(self.quadratics, dtype=float)
        if quadratics.ndim != 3 or quadratics.shape[1] != quadratics.shape[2]:
            raise DimensionError(t("error.constraints.shape"), field="constraints")
        linear = np.asarray(self.linear, dtype=float).reshape(quadratics.shape[0], quadratics.shape[1])
        constants = np.atleast_1d(np.asarray(self.constants, dtype=float))
        check_dimension("constants", constants, quadratics.shape[0])
        object.__setattr__(self, "quadratics", quadratics)
        object.__setattr__(self, "linear", linear)
        object.__setattr__(self, "constants", constants)

    @property
    def count(self) -> int:
        return self.quadratics.shape[0]

    @property
    def dimension(self) -> int:
        return self.quadratics.shape[1]

    def values(self, state: np.ndarray) -> np.ndarray:
        return 0.5 * np.einsum("k,jkl,l->j", state, self.quadratics, state) + self.linear @ state + self.constants

    def jacobian(self, state: np.ndarray) -> np.ndarray:
        return np.einsum("jkl,l->jk", self.quadratics, state) + self.linear

    def partial_jacobian(self, state: np.ndarray, cols: slice) -> np.ndarray:
        return np.einsum("jkl,l->jk", self.quadratics[:, cols, :], state) + self.linear[:, cols]

    def hessians(self, state: np.ndarray) -> np.ndarray:
        return self.quadratics


ConstraintSet = Union[AffineConstraints, QuadraticConstraints]


@dataclass(frozen=True, eq=False)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray
    partition: BlockPartition

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        check_dimension("lower", lower, self.partition.dimension)
        check_dimension("upper", upper, self.partition.dimension)
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ValidationError(t("error.box.unbounded"), field="box")
        if np.any(lower > upper):
            raise ValidationError(t("error.box.empty"), field="box")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, partition: BlockPartition, lower: float, upper: float) -> BoxSet:
        return cls(np.full(partition.dimension, float(lower)), np.full(partition.dimension, float(upper)), partition)

    @property
    def dimension(self) -> int:
        return self.partition.dimension

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def block_diameter(self) -> float:
        return float(self.partition.block_norms(self.upper - self.lower).max())

    @property
    def max_norm(self) -> float:
        return float(np.sqrt(np.sum(np.maximum(self.lower**2, self.upper**2))))

    def contains(self, state: np.ndarray, atol: float = 0.0) -> bool:
        state = np.asarray(state, dtype=float)
        return bool(np.all(state >= self.lower - atol) and np.all(state <= self.upper + atol))

    def project(self, vector: np.ndarray) -> np.ndarray:
        return np.clip(vector, self.lower, self.upper)

    def project_block(self, block: np.ndarray, agent: int) -> np.ndarray:
        rows = self.partition.block(agent)
        return np.clip(block, self.lower[rows], self.upper[rows])

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    name: str
    box: BoxSet
    local_costs: tuple[LocalCost, ...]
    coupling: QuadraticCoupling
    constraints: ConstraintSet
    sparsity: frozenset[tuple[int, int]]
    slater_point: np.ndarray
    cost_lower_bound: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "local_costs", tuple(self.local_costs))
        object.__setattr__(self, "sparsity", frozenset((int(i), int(j)) for i, j in self.sparsity))
        slater_point = np.asarray(self.slater_point, dtype=float)
        object.__setattr__(self, "slater_point", slater_point)
        check_dimension("local_costs", self.local_costs, self.agent_count)
        check_dimension("slater_point", slater_point, self.dimension)
        check_dimension("coupling", range(self.coupling.dimension), self.dimension)
        check_dimension("constraints", range(self.constraints.dimension), self.dimension)
        if not self.box.contains(slater_point):
            raise SlaterViolationError(t("error.slater.outside"), field="slater_point")
        if self.constraint_count and np.any(self.constraint_values(slater_point) >= 0.0):
            raise SlaterViolationError(t("error.slater.infeasible", name=self.name), field="slater_point")
        if self.cost_lower_bound > self.cost(slater_point):
            raise ValidationError(t("error.lower_bound", value=self.cost_lower_bound), field="cost_lower_bound")

    @property
    def partition(self) -> BlockPartition:
        return self.box.partition

    @property
    def agent_count(self) -> int:
        return self.box.partition.count

    @property
    def dimension(self) -> int:
        return self.box.dimension

    @property
    def constraint_count(self) -> int:
        return self.constraints.count

    def block(self, agent: int) -> slice:
        return self.partition.block(agent)

    def cost(self, state: np.ndarray) -> float:
        local = sum(cost.value(state[rows]) for cost, rows in zip(self.local_costs, self.partition.slices))
        return float(local + self.coupling.value(state))

    def partial_cost_gradient(self, state: np.ndarray, agent: int) -> np.ndarray:
        rows = self.partition.block(agent)
        return self.local_costs[agent].gradient(state[rows]) + self.coupling.partial_gradient(state, rows)

    def cost_gradient(self, state: np.ndarray) -> np.ndarray:
        return np.concatenate([self.partial_cost_gradient(state, agent) for agent in range(self.agent_count)])

    def cost_hessian(self, state: np.ndarray) -> np.ndarray:
        hessian = np.array(self.coupling.hessian(state), dtype=float, copy=True)
        for cost, rows in zip(self.local_costs, self.partition.slices):
            hessian[rows, rows] += cost.hessian(state[rows])
        return hessian

    def constraint_values(self, state: np.ndarray) -> np.ndarray:
        return self.constraints.values(state)

    def constraint_jacobian(self, state: np.ndarray) -> np.ndarray:
        return self.constraints.jacobian(state)

    def constraint_hessians(self, state: np.ndarray) -> np.ndarray:
        return self.constraints.hessians(state)

    @property
    def constant_curvature(self) -> bool:
        return all(cost.constant_hessian for cost in self.local_costs) and self.constraints.constant_hessian


def sparsity_from_pattern(pattern: np.ndarray) -> frozenset[tuple[int, int]]:
    """Agent pairs (i, j), i != j, marked in a boolean agent-by-agent dependency pattern."""
    pattern = np.asarray(pattern, dtype=bool)
    return frozenset((int(i), int(j)) for i, j in zip(*np.nonzero(pattern)) if i != j)


def essential_neighborhoods(spec: ProblemSpec) -> tuple[frozenset[int], ...]:
    agent_count = spec.agent_count
    for i, j in spec.sparsity:
        if not (0 <= i < agent_count and 0 <= j < agent_count):
            raise ValidationError(t("error.sparsity.range", pair=(i, j), count=agent_count), field="sparsity")
        if i != j and (j, i) not in spec.sparsity:
            raise ValidationError(t("error.sparsity.asymmetric", pair=(i, j)), field="sparsity")
    return tuple(
        frozenset(j for i, j in spec.sparsity if i == agent and j != agent) for agent in range(agent_count)
    )


def unordered_pairs(neighborhoods: Iterable[frozenset[int]]) -> tuple[tuple[int, int], ...]:
    return tuple(
        sorted({(min(agent, peer), max(agent, peer)) for agent, peers in enumerate(neighborhoods) for peer in peers})
    )


def dual_ball_radius(spec: ProblemSpec, alpha: float) -> float:
    """l1 radius B of the dual set M = {mu >= 0 : ||mu||_1 <= B}, from the Slater point."""
    if spec.constraint_count == 0:
        # M is the single point of R^0; any positive radius describes it.
        return 1.0
    slack = -spec.constraint_values(spec.slater_point)
    if np.any(slack <= 0.0):
        raise SlaterViolationError(t("error.slater.infeasible", name=spec.name), field="slater_point")
    slater = spec.slater_point
    numerator = spec.cost(slater) + 0.5 * alpha * float(slater @ slater) - spec.cost_lower_bound
    radius = numerator / float(slack.min())
    if radius <= 0.0:
        # Only reachable when f_lb equals f at the Slater point and the regularizer vanishes.
        radius = np.finfo(float).eps
    return float(radius)
