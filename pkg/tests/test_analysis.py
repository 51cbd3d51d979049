import math

import numpy as np
import pytest

from cloud_pd.analysis.bounds import (
    RateConstants,
    bound_columns,
    build_report,
    dual_rate_bound,
    dual_rate_bound_series,
    partial_round_bound,
    primal_round_bound,
    primal_total_bound,
)
from cloud_pd.analysis.oscillation import detect_oscillation
from cloud_pd.analysis.replay import (
    InnerTargets,
    check_round_csv,
    check_trace_bounds,
    descent_report,
    rate_reports,
    round_report,
)
from cloud_pd.error_handler import ConfigError, DimensionError, ValidationError
from cloud_pd.problem.spec import essential_neighborhoods
from cloud_pd.sim.engine import run_async, run_async_partial
from cloud_pd.sim.export import round_table, trace_metadata, write_round_csv
from cloud_pd.sim.schedule import ScheduleParams, generate_schedule
from cloud_pd.solver import reference_solution, solve_saddle

CONSTS = RateConstants(
    q_p=0.9, q_d=0.5, agent_count=4, constraint_gradient=2.0, block_diameter=1.5, diameter=3.0, rho=0.1, alpha=0.2
)


@pytest.fixture(scope="module")
def flow_saddle(flow_spec, flow_reg, flow_steps):
    return solve_saddle(flow_spec, flow_reg, flow_steps)


@pytest.fixture(scope="module")
def flow_trace(flow_spec, flow_reg, flow_bounds, flow_steps):
    schedule = generate_schedule(0, ScheduleParams(horizon_rounds=12), essential_neighborhoods(flow_spec))
    return run_async(
        flow_spec, flow_reg, flow_steps, schedule, np.zeros(8), np.zeros(9), bounds=flow_bounds, record_events=True
    )


class TestRateConstants:
    @pytest.mark.parametrize("field, value", [("q_p", 1.0), ("q_d", 0.0), ("q_p", -0.1)])
    def test_contraction_range(self, field, value):
        values = dict(
            q_p=0.5, q_d=0.5, agent_count=2, constraint_gradient=1.0, block_diameter=1.0, diameter=1.0, rho=0.1, alpha=0.1
        )
        values[field] = value
        with pytest.raises(ValidationError):
            RateConstants(**values)

    def test_header_round_trip(self):
        header = {key: repr(value) for key, value in CONSTS.as_metadata().items()}
        assert RateConstants.from_metadata(header) == CONSTS

    def test_header_missing_constant(self):
        header = {key: repr(value) for key, value in CONSTS.as_metadata().items() if key != "rho"}
        with pytest.raises(ConfigError, match="rho"):
            RateConstants.from_metadata(header)

    def test_from_flow_problem(self, flow_bounds, flow_reg, flow_steps):
        consts = RateConstants.from_problem(flow_bounds, flow_reg, flow_steps, 8)
        assert consts.q_p == pytest.approx((flow_bounds.lipschitz - 0.1) / (flow_bounds.lipschitz + 0.1))
        assert 0.0 < consts.q_d < 1.0


class TestBoundFunctions:
    def test_primal_round_without_cycles(self):
        assert primal_round_bound(0, 2.5, 0.9) == 2.5

    def test_primal_round_many_cycles(self):
        assert primal_round_bound(10_000, 2.5, 0.9) == pytest.approx(0.0)

    def test_primal_round_rejects_negative_cycles(self):
        with pytest.raises(ValidationError):
            primal_round_bound(-1, 1.0, 0.9)

    def test_dual_bound_single_round(self):
        n, mg, lx, d = 4, 2.0, 1.5, 3.0
        expected = 0.5 * 0.7 + 0.5 * n * mg**2 * lx**2 + 2.0 * math.sqrt(n) * 0.1**2 * mg**2 * lx * d
        assert dual_rate_bound(0, 0.7, [0], CONSTS) == pytest.approx(expected)

    def test_dual_bound_exact_method_limit(self):
        cycles = [10_000] * 5
        assert dual_rate_bound(4, 0.7, cycles, CONSTS) == pytest.approx(0.5**5 * 0.7)

    def test_dual_bound_length_check(self):
        with pytest.raises(DimensionError):
            dual_rate_bound(3, 0.7, [0, 1], CONSTS)

    def test_series_matches_termwise_bound(self):
        cycles = [0, 2, 1, 5, 3, 8, 0, 4]
        series = dual_rate_bound_series(1.3, cycles, CONSTS)
        expected = [dual_rate_bound(t, 1.3, cycles[: t + 1], CONSTS) for t in range(len(cycles))]
        np.testing.assert_allclose(series, expected, rtol=1e-12)

    def test_series_empty(self):
        assert dual_rate_bound_series(1.0, [], CONSTS).size == 0

    def test_primal_total(self):
        assert primal_total_bound(0, 0.3, CONSTS) == pytest.approx(2.0 * 1.5 + 2.0 / 0.2 * 0.3)
        assert primal_total_bound(10_000, 0.0, CONSTS) == pytest.approx(0.0)

    def test_partial_with_single_fresh_block(self):
        assert partial_round_bound(1, 0, 3, 2.0, 0.9, 1.5) == pytest.approx(primal_round_bound(3, 2.0, 0.9))
        assert partial_round_bound(1, 2, 3, 2.0, 0.9, 1.5) == pytest.approx(
            math.sqrt((2.0 * 0.9**3) ** 2 + 2 * 1.5**2)
        )

    def test_partial_needs_a_fresh_block(self):
        with pytest.raises(ValidationError):
            partial_round_bound(0, 3, 1, 1.0, 0.9, 1.0)


class TestBoundReport:
    def test_violations(self):
        report = build_report("demo", [0.1, 0.5, 0.2], [0.2, 0.4, 0.2])
        assert report.violations == 1
        assert not report.ok
        np.testing.assert_allclose(report.slack, [0.1, -0.1, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            build_report("demo", [0.1, 0.2], [0.3])

    def test_csv(self, tmp_path):
        path = build_report("demo", [0.1, 0.5], [0.2, 0.4], rounds=[3, 4]).write_csv(tmp_path / "out" / "demo.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "t,measured,bound,slack,violated"
        assert lines[1].startswith("3,0.1,0.2,")
        assert lines[2].endswith(",1")


class TestOscillation:
    def test_constant_is_degenerate(self):
        report = detect_oscillation(np.ones(20))
        assert report.degenerate
        assert not report.decaying

    def test_damped_sine_decays(self):
        k = np.arange(60)
        report = detect_oscillation(0.9**k * np.sin(k))
        assert report.decaying
        assert report.ratio < 0.01

    def test_steady_sine_does_not_decay(self):
        k = np.arange(60)
        report = detect_oscillation(np.column_stack((np.sin(k), np.cos(k))))
        assert not report.decaying
        assert not report.degenerate

    def test_too_short(self):
        with pytest.raises(ValidationError):
            detect_oscillation([1.0, 2.0, 3.0], window=2)

    def test_window_positive(self):
        with pytest.raises(ValidationError):
            detect_oscillation(np.arange(10.0), window=0)


class TestReplay:
    def test_rate_bounds_hold(self, flow_trace, flow_saddle, flow_bounds, flow_reg, flow_steps):
        consts = RateConstants.from_problem(flow_bounds, flow_reg, flow_steps, 8)
        dual, primal = rate_reports(flow_trace, flow_saddle, consts)
        assert dual.rounds.size == flow_trace.round_count
        assert dual.ok and primal.ok

    def test_round_and_descent_replay(self, flow_trace, flow_spec, flow_reg, flow_steps, flow_bounds):
        targets = InnerTargets(flow_spec, flow_reg, flow_steps.gamma)
        consts = RateConstants.from_problem(flow_bounds, flow_reg, flow_steps, 8)
        rounds = round_report(flow_trace, targets, consts.q_p, rounds=range(4))
        assert rounds.ok
        assert rounds.rounds.tolist() == [0, 1, 2, 3]
        descent = descent_report(flow_trace, targets, consts.q_p, rounds=range(4))
        assert descent.ok
        assert descent.checks > 0

    def test_check_trace_bounds(self, flow_trace, flow_spec, flow_saddle, flow_bounds):
        result = check_trace_bounds(flow_trace, flow_spec, saddle=flow_saddle, bounds=flow_bounds, rounds=range(2))
        assert result.ok
        assert result.descent is not None

    def test_check_without_replay(self, flow_trace, flow_spec, flow_saddle, flow_bounds):
        result = check_trace_bounds(flow_trace, flow_spec, saddle=flow_saddle, bounds=flow_bounds, replay=False)
        assert result.rounds is None and result.descent is None
        assert result.ok

    def test_trace_from_other_problem(self, flow_trace, counter_spec):
        with pytest.raises(ValidationError):
            check_trace_bounds(flow_trace, counter_spec, replay=False)

    def test_descent_needs_events(self, flow_spec, flow_reg, flow_bounds, flow_steps):
        schedule = generate_schedule(0, ScheduleParams(horizon_rounds=2), essential_neighborhoods(flow_spec))
        trace = run_async(flow_spec, flow_reg, flow_steps, schedule, np.zeros(8), np.zeros(9), bounds=flow_bounds)
        with pytest.raises(ValidationError):
            descent_report(trace, InnerTargets(flow_spec, flow_reg, flow_steps.gamma), 0.9)

    def test_partial_rounds_within_bound(self, flow_spec, flow_reg, flow_bounds, flow_steps):
        params = ScheduleParams(upload_probability=0.4, horizon_rounds=12)
        schedule = generate_schedule(1, params, essential_neighborhoods(flow_spec))
        trace = run_async_partial(
            flow_spec, flow_reg, flow_steps, schedule, np.zeros(8), np.zeros(9), min_fresh=1, bounds=flow_bounds
        )
        consts = RateConstants.from_problem(flow_bounds, flow_reg, flow_steps, 8)
        report = round_report(trace, InnerTargets(flow_spec, flow_reg, flow_steps.gamma), consts.q_p, rounds=range(4))
        assert report.ok

    def test_round_csv_check(self, tmp_path, flow_trace, flow_spec, flow_saddle, flow_bounds, flow_reg, flow_steps):
        consts = RateConstants.from_problem(flow_bounds, flow_reg, flow_steps, 8)
        _, primal = rate_reports(flow_trace, flow_saddle, consts)
        initial = float(np.sum((flow_trace.initial_dual - flow_saddle.dual) ** 2))
        table = round_table(
            flow_trace,
            flow_spec,
            flow_saddle,
            reference_solution(flow_spec),
            dual_bound=dual_rate_bound_series(initial, flow_trace.cycles, consts),
            primal_bound=primal.bound,
        )
        path = write_round_csv(tmp_path / "trace.csv", table, trace_metadata(flow_trace, **consts.as_metadata()))
        check = check_round_csv(path)
        assert check.ok
        assert check.mismatched == 0
        assert check.dual.rounds.size == flow_trace.round_count
        np.testing.assert_allclose(check.primal.bound, primal.bound, rtol=1e-12)

    def test_bound_columns_match_rate_reports(self, flow_trace, flow_saddle, flow_bounds, flow_reg, flow_steps):
        consts = RateConstants.from_problem(flow_bounds, flow_reg, flow_steps, 8)
        dual, primal = rate_reports(flow_trace, flow_saddle, consts)
        errors = np.linalg.norm(flow_trace.duals - flow_saddle.dual, axis=1)
        dual_column, primal_column = bound_columns(errors, flow_trace.cycles, consts)
        np.testing.assert_allclose(dual_column[1:], np.sqrt(dual.bound[:-1]), rtol=1e-12)
        np.testing.assert_allclose(primal_column, primal.bound, rtol=1e-12)
        assert dual_column[0] == errors[0]
