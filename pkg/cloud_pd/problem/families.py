"""Built-in problem families."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from ..analysis.norms import BlockPartition
from ..error_handler import ValidationError
from ..i18n import t
from .spec import (
    AffineConstraints,
    BoxSet,
    LinearCost,
    LocalCost,
    LogUtility,
    ProblemSpec,
    QuadraticConstraints,
    QuadraticCost,
    QuadraticCoupling,
    sparsity_from_pattern,
)

logger = logging.getLogger(__name__)

LOWER_BOUND_MARGIN = 1e-6
CORNER_LIMIT = 12


def _cost(state: np.ndarray, box: BoxSet, local_costs: Sequence[LocalCost], coupling: QuadraticCoupling) -> float:
    local = sum(cost.value(state[rows]) for cost, rows in zip(local_costs, box.partition.slices))
    return float(local + coupling.value(state))


def _cost_gradient(
    state: np.ndarray, box: BoxSet, local_costs: Sequence[LocalCost], coupling: QuadraticCoupling
) -> np.ndarray:
    local = np.concatenate([cost.gradient(state[rows]) for cost, rows in zip(local_costs, box.partition.slices)])
    return local + coupling.gradient(state)


def cost_lower_bound(
    box: BoxSet,
    local_costs: Sequence[LocalCost],
    coupling: QuadraticCoupling,
    margin: float = LOWER_BOUND_MARGIN,
) -> float:
    """min_X f from L-BFGS-B (and the corners of small boxes), lowered by a relative margin."""
    result = minimize(
        _cost,
        box.center,
        args=(box, local_costs, coupling),
        jac=_cost_gradient,
        method="L-BFGS-B",
        bounds=list(zip(box.lower, box.upper)),
        options={"ftol": 1e-14, "gtol": 1e-10},
    )
    smallest = float(result.fun)
    if box.dimension <= CORNER_LIMIT:
        smallest = min(smallest, min(_cost(corner, box, local_costs, coupling) for corner in box.corners()))
    return smallest - margin * (1.0 + abs(smallest))


def flow_adjacency(paths: Sequence[Sequence[int]], edge_count: int) -> np.ndarray:
    """Edge-by-flow 0/1 matrix; path entries are 1-based edge labels."""
    adjacency = np.zeros((edge_count, len(paths)))
    for flow, path in enumerate(paths):
        if not path:
            raise ValidationError(t("error.flow.empty_path", flow=flow), field="paths")
        for edge in path:
            if not 1 <= edge <= edge_count:
                raise ValidationError(t("error.flow.edge", flow=flow, edge=edge, count=edge_count), field="paths")
            adjacency[edge - 1, flow] = 1.0
    return adjacency


def network_utility_problem(
    paths: Sequence[Sequence[int]],
    *,
    edge_count: int,
    capacity: float,
    utility_weight: float,
    congestion_scale: float,
    box_lower: float,
    box_upper: float,
    slater_value: float,
    name: str = "flow",
) -> ProblemSpec:
    """Log utilities, congestion s x'A'Ax and capacity constraints Ax <= b, one flow per agent.

    Two agents are essential neighbors exactly when their paths share an edge.
    """
    adjacency = flow_adjacency(paths, edge_count)
    agent_count = len(paths)
    partition = BlockPartition.uniform(agent_count)
    box = BoxSet.uniform(partition, box_lower, box_upper)
    gram = adjacency.T @ adjacency
    local_costs = tuple(LogUtility(utility_weight) for _ in range(agent_count))
    coupling = QuadraticCoupling(2.0 * congestion_scale * gram)
    constraints = AffineConstraints(adjacency, np.full(edge_count, float(capacity)))
    return ProblemSpec(
        name=name,
        box=box,
        local_costs=local_costs,
        coupling=coupling,
        constraints=constraints,
        sparsity=sparsity_from_pattern(gram > 0),
        slater_point=np.full(agent_count, float(slater_value)),
        cost_lower_bound=cost_lower_bound(box, local_costs, coupling),
    )


def example_four_agent_problem(delta: float = 0.05, bound: float = 1.0) -> ProblemSpec:
    """Costs x_i^2/2 on [-bound, bound], with g_1 coupling agents 0 and 1 and g_2 agents 2 and 3."""
    partition = BlockPartition.uniform(4)
    box = BoxSet.uniform(partition, -bound, bound)
    local_costs = tuple(QuadraticCost([[1.0]], [0.0]) for _ in range(4))
    coupling = QuadraticCoupling.zero(4)
    difference = np.array([[1.0, -1.0], [-1.0, 1.0]])
    quadratics = np.zeros((2, 4, 4))
    quadratics[0, :2, :2] = difference
    quadratics[1, 2:, 2:] = difference
    constraints = QuadraticConstraints(quadratics, np.zeros((2, 4)), np.full(2, -delta))
    return ProblemSpec(
        name="four-agent",
        box=box,
        local_costs=local_costs,
        coupling=coupling,
        constraints=constraints,
        sparsity=frozenset({(0, 1), (1, 0), (2, 3), (3, 2)}),
        slater_point=np.array([0.5, 0.5, -0.5, -0.5]) * bound,
        cost_lower_bound=0.0,
    )


def counterexample_problem() -> ProblemSpec:
    """f = 0.1 x_1 - 0.1 x_2, g = (x_1 - x_2)^2 / 2 - 0.2 on [0, 5]^2."""
    partition = BlockPartition.uniform(2)
    box = BoxSet.uniform(partition, 0.0, 5.0)
    quadratics = np.array([[[1.0, -1.0], [-1.0, 1.0]]])
    return ProblemSpec(
        name="counterexample",
        box=box,
        local_costs=(LinearCost([0.1]), LinearCost([-0.1])),
        coupling=QuadraticCoupling.zero(2),
        constraints=QuadraticConstraints(quadratics, np.zeros((1, 2)), [-0.2]),
        sparsity=frozenset({(0, 1), (1, 0)}),
        slater_point=np.array([2.5, 2.5]),
        cost_lower_bound=-0.5,
    )


def separable_problem(agent_count: int = 3, target: float = 1.5, cap: float = 1.0, upper: float = 2.0) -> ProblemSpec:
    """Independent agents: (x_i - target)^2 / 2 with x_i <= cap; no essential neighbors."""
    if agent_count < 1:
        raise ValidationError(t("error.positive", field="agent_count", value=agent_count), field="agent_count")
    partition = BlockPartition.uniform(agent_count)
    box = BoxSet.uniform(partition, 0.0, upper)
    local_costs = tuple(QuadraticCost([[1.0]], [-target]) for _ in range(agent_count))
    return ProblemSpec(
        name="separable",
        box=box,
        local_costs=local_costs,
        coupling=QuadraticCoupling.zero(agent_count),
        constraints=AffineConstraints(np.eye(agent_count), np.full(agent_count, cap)),
        sparsity=frozenset(),
        slater_point=np.full(agent_count, 0.5 * cap),
        cost_lower_bound=-0.5 * target**2 * agent_count,
    )
