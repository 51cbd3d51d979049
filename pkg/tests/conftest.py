import numpy as np
import pytest

from cloud_pd.core.lagrangian import RegParams, StepSizes
from cloud_pd.experiments.flow import FlowRoutingConfig, build_flow_problem
from cloud_pd.problem.bounds import compute_bounds
from cloud_pd.problem.families import counterexample_problem, example_four_agent_problem, separable_problem


@pytest.fixture(scope="session")
def flow_spec():
    return build_flow_problem(FlowRoutingConfig())


@pytest.fixture(scope="session")
def counter_spec():
    return counterexample_problem()


@pytest.fixture(scope="session")
def four_agent_spec():
    return example_four_agent_problem()


@pytest.fixture(scope="session")
def separable_spec():
    return separable_problem()


@pytest.fixture(scope="session")
def flow_reg():
    return RegParams(0.1, 0.1)


@pytest.fixture(scope="session")
def flow_bounds(flow_spec, flow_reg):
    return compute_bounds(flow_spec, flow_reg.alpha)


@pytest.fixture(scope="session")
def flow_steps(flow_bounds, flow_reg):
    return StepSizes.recommended(flow_bounds, flow_reg)


@pytest.fixture(scope="session")
def four_agent_setup(four_agent_spec):
    reg = RegParams(0.1, 0.1)
    bounds = compute_bounds(four_agent_spec, reg.alpha)
    return four_agent_spec, reg, bounds, StepSizes.recommended(bounds, reg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
