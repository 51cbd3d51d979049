import numpy as np
import pytest

from cloud_pd.core.lagrangian import RegParams, StepSizes, dual_ball_for
from cloud_pd.error_handler import DimensionError, ValidationError
from cloud_pd.problem.spec import essential_neighborhoods
from cloud_pd.sim.cycles import CycleTracker, count_cycles
from cloud_pd.sim.engine import (
    STOP_HORIZON,
    STOP_RESIDUAL,
    STOP_TOLERANCE,
    CloudState,
    cloud_dual_update,
    run_async,
    run_async_partial,
)
from cloud_pd.sim.schedule import ScheduleParams, generate_schedule, lockstep_schedule
from cloud_pd.sim.trace import DELIVER, DISCARD, DUAL, SEND, UPDATE
from cloud_pd.solver import solve_saddle, sync_step

X0_FOUR = np.array([1.0, -1.0, 0.5, 1.0])


def _four_agent_run(four_agent_setup, params, seed=0, **options):
    spec, reg, bounds, steps = four_agent_setup
    schedule = generate_schedule(seed, params, essential_neighborhoods(spec))
    return run_async(spec, reg, steps, schedule, X0_FOUR, np.zeros(2), bounds=bounds, **options)


class TestLockstep:
    @pytest.mark.parametrize("problem", ["four_agent", "flow"])
    def test_matches_jacobi_iteration(self, problem, four_agent_setup, flow_spec, flow_reg, flow_bounds, flow_steps):
        if problem == "flow":
            spec, reg, bounds, steps = flow_spec, flow_reg, flow_bounds, flow_steps
            state = np.linspace(0.0, 10.0, spec.dimension)
        else:
            spec, reg, bounds, steps = four_agent_setup
            state = X0_FOUR.copy()
        dual = np.zeros(spec.constraint_count)
        trace = run_async(
            spec, reg, steps, lockstep_schedule(essential_neighborhoods(spec), 100), state, dual, bounds=bounds
        )
        assert trace.round_count == 100
        assert trace.stop_reason == STOP_HORIZON
        ball = dual_ball_for(spec, reg)
        for record in trace.rounds:
            np.testing.assert_allclose(record.cloud_state, state, rtol=1e-13, atol=1e-14)
            np.testing.assert_allclose(record.dual, dual, rtol=1e-13, atol=1e-14)
            state, dual = sync_step(state, dual, spec, reg, steps, ball)
            np.testing.assert_allclose(record.next_dual, dual, rtol=1e-13, atol=1e-14)

    def test_lockstep_uploads_before_updating(self, four_agent_setup):
        spec, reg, bounds, steps = four_agent_setup
        trace = run_async(
            spec, reg, steps, lockstep_schedule(essential_neighborhoods(spec), 5), X0_FOUR, np.zeros(2), bounds=bounds
        )
        np.testing.assert_array_equal(trace.cycles, 0)
        np.testing.assert_array_equal(trace.fresh_counts, 4)


class TestCycles:
    def test_tracker_needs_updates_and_links(self):
        tracker = CycleTracker((frozenset({1}), frozenset({0})))
        tracker.on_update(0, 1)
        tracker.on_update(1, 2)
        tracker.on_delivery(0, 1, computed_seq=1, seq=3)
        assert tracker.completed == []
        tracker.on_delivery(1, 0, computed_seq=2, seq=4)
        assert tracker.completed == [4]
        assert tracker.cycles_before(4) == 0
        assert tracker.cycles_before(5) == 1

    def test_stale_state_does_not_count(self):
        tracker = CycleTracker((frozenset({1}), frozenset({0})))
        tracker.restart(10)
        tracker.on_update(0, 11)
        tracker.on_update(1, 12)
        tracker.on_delivery(0, 1, computed_seq=11, seq=13)
        tracker.on_delivery(1, 0, computed_seq=5, seq=14)
        assert tracker.completed == []

    def test_isolated_agents_close_on_updates(self):
        tracker = CycleTracker((frozenset(), frozenset()))
        tracker.on_update(0, 0)
        tracker.on_update(0, 1)
        tracker.on_update(1, 2)
        assert tracker.completed == [2]

    def test_update_exchange_upload_rounds(self, four_agent_setup):
        params = ScheduleParams(update_probability=1.0, edge_probability=1.0, round_length=(1, 1), horizon_rounds=20)
        trace = _four_agent_run(four_agent_setup, params)
        np.testing.assert_array_equal(trace.cycles, 1)

    def test_silent_links_give_no_cycles(self, four_agent_setup):
        params = ScheduleParams(update_probability=0.5, edge_probability=0.0, round_length=(5, 10), horizon_rounds=20)
        trace = _four_agent_run(four_agent_setup, params)
        np.testing.assert_array_equal(trace.cycles, 0)
        assert trace.messages_sent == 0

    def test_replay_matches_online_count(self, four_agent_setup):
        params = ScheduleParams(
            update_probability=0.4, edge_probability=0.4, round_length=(5, 40), delay_range=(0, 3), horizon_rounds=60
        )
        trace = _four_agent_run(four_agent_setup, params, seed=5, record_events=True)
        replayed = [count_cycles(trace, index) for index in range(trace.round_count)]
        assert replayed == trace.cycles.tolist()
        assert max(replayed) > 0


class TestMessages:
    @pytest.mark.parametrize("seed", range(10))
    def test_fifo_per_channel(self, flow_spec, flow_reg, flow_bounds, flow_steps, seed):
        params = ScheduleParams(
            update_probability=0.2, edge_probability=0.2, round_length=(20, 60), delay_range=(0, 30), horizon_rounds=15
        )
        schedule = generate_schedule(seed, params, essential_neighborhoods(flow_spec))
        trace = run_async(
            flow_spec, flow_reg, flow_steps, schedule, np.zeros(8), np.zeros(9), bounds=flow_bounds, record_events=True
        )
        arrivals: dict[tuple[int, int], list[int]] = {}
        for event in trace.events:
            if event.kind in (DELIVER, DISCARD):
                arrivals.setdefault((event.agent, event.peer), []).append(event.message_seq)
        assert arrivals
        for order in arrivals.values():
            assert order == sorted(order)

    @pytest.mark.parametrize("seed", range(10))
    def test_messages_delayed_past_every_round_are_discarded(self, four_agent_setup, seed):
        params = ScheduleParams(
            update_probability=1.0, edge_probability=1.0, round_length=(3, 3), delay_range=(10, 10), horizon_rounds=30
        )
        trace = _four_agent_run(four_agent_setup, params, seed=seed, record_events=True)
        kinds = [event.kind for event in trace.events]
        assert DELIVER not in kinds
        assert kinds.count(DISCARD) == trace.messages_discarded > 0
        assert kinds.count(SEND) == trace.messages_sent
        # Whatever is still queued at the horizon was sent during the last 10 ticks.
        assert trace.messages_sent - trace.messages_discarded <= 4 * 10
        np.testing.assert_array_equal(trace.cycles, 0)

    @pytest.mark.parametrize("seed", range(10))
    def test_agents_share_the_dual_timestamp(self, four_agent_setup, seed):
        params = ScheduleParams(
            update_probability=0.5, edge_probability=0.5, round_length=(3, 12), delay_range=(0, 2), horizon_rounds=40
        )
        trace = _four_agent_run(four_agent_setup, params, seed=seed, record_events=True)
        broadcasts = 0
        for event in trace.events:
            if event.kind == DUAL:
                broadcasts += 1
            elif event.kind == UPDATE:
                assert event.round_index == broadcasts


class TestRun:
    def test_deterministic(self, four_agent_setup):
        params = ScheduleParams(
            update_probability=0.3, edge_probability=0.3, round_length=(5, 20), delay_range=(0, 4), horizon_rounds=50
        )
        first = _four_agent_run(four_agent_setup, params, seed=3)
        second = _four_agent_run(four_agent_setup, params, seed=3)
        np.testing.assert_array_equal(first.cloud_states, second.cloud_states)
        np.testing.assert_array_equal(first.duals, second.duals)
        np.testing.assert_array_equal(first.cycles, second.cycles)
        assert first.ticks == second.ticks

    def test_converges_to_saddle(self, four_agent_setup):
        spec, reg, bounds, steps = four_agent_setup
        saddle = solve_saddle(spec, reg, steps, tol=1e-12)
        params = ScheduleParams(
            update_probability=0.3, edge_probability=0.3, round_length=(5, 20), horizon_rounds=20_000
        )
        trace = _four_agent_run(four_agent_setup, params, seed=1, reference=saddle, tolerance=1e-6, record_snapshots=False)
        assert trace.stop_reason == STOP_TOLERANCE
        assert np.linalg.norm(trace.final_state - saddle.state) < 1e-6

    def test_residual_stop(self, four_agent_setup):
        params = ScheduleParams(
            update_probability=0.3, edge_probability=0.3, round_length=(5, 20), horizon_rounds=20_000
        )
        trace = _four_agent_run(four_agent_setup, params, seed=1, residual_tolerance=1e-8, record_snapshots=False)
        assert trace.stop_reason == STOP_RESIDUAL
        assert trace.round_count < 20_000

    def test_residual_ignored_with_reference(self, four_agent_setup):
        spec, reg, bounds, steps = four_agent_setup
        saddle = solve_saddle(spec, reg, steps, tol=1e-12)
        params = ScheduleParams(round_length=(5, 20), horizon_rounds=25)
        trace = _four_agent_run(
            four_agent_setup, params, seed=1, reference=saddle, tolerance=1e-12, residual_tolerance=1e6
        )
        assert trace.stop_reason == STOP_HORIZON
        assert trace.round_count == 25

    @pytest.mark.parametrize("problem", ["four_agent", "flow"])
    @pytest.mark.parametrize("delay_range", [(0, 0), (0, 3)])
    def test_event_log_does_not_change_run(
        self, problem, delay_range, four_agent_setup, flow_spec, flow_reg, flow_bounds, flow_steps
    ):
        if problem == "flow":
            spec, reg, bounds, steps = flow_spec, flow_reg, flow_bounds, flow_steps
            state = np.full(spec.dimension, 2.0)
        else:
            spec, reg, bounds, steps = four_agent_setup
            state = X0_FOUR
        params = ScheduleParams(
            update_probability=0.3, edge_probability=0.3, round_length=(5, 20), delay_range=delay_range,
            horizon_rounds=40,
        )
        schedule = generate_schedule(5, params, essential_neighborhoods(spec))
        dual = np.zeros(spec.constraint_count)
        quiet = run_async(spec, reg, steps, schedule, state, dual, bounds=bounds)
        logged = run_async(spec, reg, steps, schedule, state, dual, bounds=bounds, record_events=True)
        np.testing.assert_array_equal(quiet.cloud_states, logged.cloud_states)
        np.testing.assert_array_equal(quiet.duals, logged.duals)
        np.testing.assert_array_equal(quiet.cycles, logged.cycles)
        assert (quiet.messages_sent, quiet.messages_discarded) == (logged.messages_sent, logged.messages_discarded)

    def test_all_fresh_gate_accumulates_uploads(self, four_agent_setup):
        params = ScheduleParams(upload_probability=0.3, round_length=(5, 10), horizon_rounds=60)
        trace = _four_agent_run(four_agent_setup, params)
        np.testing.assert_array_equal(trace.fresh_counts, 4)
        assert trace.round_count < 60

    def test_partial_gate(self, four_agent_setup):
        spec, reg, bounds, steps = four_agent_setup
        params = ScheduleParams(upload_probability=0.3, round_length=(5, 10), horizon_rounds=200)
        schedule = generate_schedule(2, params, essential_neighborhoods(spec))
        trace = run_async_partial(spec, reg, steps, schedule, X0_FOUR, np.zeros(2), min_fresh=1, bounds=bounds)
        fresh = trace.fresh_counts
        assert fresh.min() >= 1
        assert fresh.min() < 4

    def test_partial_with_full_gate_matches_run_async(self, four_agent_setup):
        spec, reg, bounds, steps = four_agent_setup
        params = ScheduleParams(update_probability=0.3, edge_probability=0.3, round_length=(5, 20), horizon_rounds=30)
        schedule = generate_schedule(6, params, essential_neighborhoods(spec))
        full = run_async(spec, reg, steps, schedule, X0_FOUR, np.zeros(2), bounds=bounds)
        partial = run_async_partial(spec, reg, steps, schedule, X0_FOUR, np.zeros(2), min_fresh=4, bounds=bounds)
        np.testing.assert_array_equal(full.cloud_states, partial.cloud_states)

    def test_snapshots_are_recorded(self, four_agent_setup):
        params = ScheduleParams(horizon_rounds=5)
        trace = _four_agent_run(four_agent_setup, params)
        assert trace.rounds[0].snapshot.shape == (4, 4)
        np.testing.assert_array_equal(trace.rounds[0].snapshot, np.tile(X0_FOUR, (4, 1)))


class TestValidation:
    def test_state_outside_box(self, four_agent_setup):
        spec, reg, bounds, steps = four_agent_setup
        schedule = lockstep_schedule(essential_neighborhoods(spec), 1)
        with pytest.raises(ValidationError):
            run_async(spec, reg, steps, schedule, np.full(4, 2.0), np.zeros(2), bounds=bounds)

    def test_dual_outside_ball(self, four_agent_setup):
        spec, reg, bounds, steps = four_agent_setup
        schedule = lockstep_schedule(essential_neighborhoods(spec), 1)
        with pytest.raises(ValidationError):
            run_async(spec, reg, steps, schedule, X0_FOUR, np.array([-1.0, 0.0]), bounds=bounds)

    def test_schedule_for_other_problem(self, four_agent_setup, counter_spec):
        spec, reg, bounds, steps = four_agent_setup
        schedule = lockstep_schedule(essential_neighborhoods(counter_spec), 1)
        with pytest.raises(DimensionError):
            run_async(spec, reg, steps, schedule, X0_FOUR, np.zeros(2), bounds=bounds)

    def test_step_too_long(self, four_agent_setup):
        spec, reg, bounds, steps = four_agent_setup
        schedule = lockstep_schedule(essential_neighborhoods(spec), 1)
        with pytest.raises(ValidationError):
            run_async(spec, reg, StepSizes(1.0, steps.rho), schedule, X0_FOUR, np.zeros(2), bounds=bounds)

    @pytest.mark.parametrize("min_fresh", [0, 5])
    def test_min_fresh_range(self, four_agent_setup, min_fresh):
        spec, reg, bounds, steps = four_agent_setup
        schedule = lockstep_schedule(essential_neighborhoods(spec), 1)
        with pytest.raises(ValidationError):
            run_async_partial(spec, reg, steps, schedule, X0_FOUR, np.zeros(2), min_fresh=min_fresh, bounds=bounds)


class TestCloudUpdate:
    def _cloud(self, spec, reg, dual, aggregate):
        return CloudState(
            dual=np.asarray(dual, dtype=float),
            aggregate=np.asarray(aggregate, dtype=float),
            fresh=np.ones(spec.agent_count, dtype=bool),
            upload_seqs=np.arange(spec.agent_count),
            rho=0.1,
            beta=reg.beta,
            ball=dual_ball_for(spec, reg),
        )

    def test_feasible_state_keeps_zero_dual(self, four_agent_spec):
        reg = RegParams(0.1, 0.1)
        cloud = self._cloud(four_agent_spec, reg, [0.0, 0.0], np.zeros(4))
        np.testing.assert_array_equal(cloud_dual_update(cloud, four_agent_spec), [0.0, 0.0])
        assert cloud.round_index == 1
        assert not cloud.fresh.any()
        np.testing.assert_array_equal(cloud.upload_seqs, -1)

    def test_fixed_point(self, counter_spec):
        reg = RegParams(0.01, 0.01)
        state = np.array([0.65, 0.0])
        dual = counter_spec.constraint_values(state) / reg.beta
        cloud = self._cloud(counter_spec, reg, dual, state)
        np.testing.assert_allclose(cloud_dual_update(cloud, counter_spec), dual)

    def test_gate(self, four_agent_spec):
        reg = RegParams(0.1, 0.1)
        cloud = self._cloud(four_agent_spec, reg, [0.0, 0.0], np.zeros(4))
        cloud.fresh[:2] = False
        with pytest.raises(ValidationError):
            cloud_dual_update(cloud, four_agent_spec, min_fresh=4)
        cloud_dual_update(cloud, four_agent_spec, min_fresh=2)
