from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..core.lagrangian import RegParams, StepSizes, dual_ball_for, dual_step, partial_grad_x_reg
from ..core.projection import DualBall
from ..error_handler import DimensionError, ScheduleError, ValidationError, check_dimension
from ..i18n import t
from ..problem.bounds import BoundsPack, compute_bounds
from ..problem.spec import ProblemSpec, essential_neighborhoods, unordered_pairs
from ..solver import SaddleEstimate
from .cycles import CycleTracker
from .schedule import RoundWindow, SimSchedule
from .trace import CLOUD, DELIVER, DISCARD, DUAL, SEND, UPDATE, UPLOAD, Event, RoundRecord, RunTrace

logger = logging.getLogger(__name__)

STOP_HORIZON = "horizon"
STOP_TOLERANCE = "tolerance"
STOP_RESIDUAL = "residual"


@dataclass(slots=True)
class StateMessage:
    sender: int
    receiver: int
    block: np.ndarray
    dual_timestamp: int
    send_tick: int
    delivery_tick: int
    computed_seq: int
    seq: int


@dataclass
class AgentLocalState:
    agent: int
    copy: np.ndarray
    dual: np.ndarray
    dual_timestamp: int = 0
    last_update_seq: int = -1


@dataclass
class CloudState:
    dual: np.ndarray
    aggregate: np.ndarray
    fresh: np.ndarray
    upload_seqs: np.ndarray
    rho: float
    beta: float
    ball: DualBall
    round_index: int = 0


@dataclass
class SimState:
    agents: list[AgentLocalState]
    cloud: CloudState
    channels: dict[tuple[int, int], deque[StateMessage]]
    busy: set[tuple[int, int]] = field(default_factory=set)
    seq: int = 0


def cloud_dual_update(cloud: CloudState, spec: ProblemSpec, min_fresh: int = 1) -> np.ndarray:
    """mu(t+1) = Pi_M[mu(t) + rho (g(x^c_t) - beta mu(t))]; clears freshness and advances t."""
    if int(cloud.fresh.sum()) < min_fresh:
        raise ValidationError(t("error.cloud.gate", fresh=int(cloud.fresh.sum()), required=min_fresh), field="fresh")
    next_dual = dual_step(cloud.dual, spec.constraint_values(cloud.aggregate), cloud.rho, cloud.beta, cloud.ball)
    cloud.dual = next_dual
    cloud.round_index += 1
    cloud.fresh[:] = False
    cloud.upload_seqs[:] = -1
    return next_dual


class AsyncSimulator:
    """Tick-driven event loop: deliveries, gradient updates, sends, then the cloud gate."""

    def __init__(
        self,
        spec: ProblemSpec,
        reg: RegParams,
        steps: StepSizes,
        schedule: SimSchedule,
        initial_state: np.ndarray,
        initial_dual: np.ndarray,
        *,
        min_fresh: int | None = None,
        bounds: BoundsPack | None = None,
        record_events: bool = False,
        record_snapshots: bool = True,
        reference: SaddleEstimate | None = None,
        tolerance: float | None = None,
        residual_tolerance: float | None = None,
    ):
        initial_state = np.asarray(initial_state, dtype=float)
        initial_dual = np.asarray(initial_dual, dtype=float)
        check_dimension("x0", initial_state, spec.dimension)
        check_dimension("mu0", initial_dual, spec.constraint_count)
        if not spec.box.contains(initial_state):
            raise ValidationError(t("error.initial.state"), field="x0")
        ball = dual_ball_for(spec, reg)
        if not ball.contains(initial_dual):
            raise ValidationError(t("error.initial.dual", radius=ball.radius), field="mu0")
        bounds = bounds if bounds is not None else compute_bounds(spec, reg.alpha)
        reg.validate(bounds)
        steps.validate(bounds, reg)

        neighborhoods = essential_neighborhoods(spec)
        if schedule.agent_count != spec.agent_count:
            raise DimensionError(
                t("error.dimension", field="schedule", expected=spec.agent_count, actual=schedule.agent_count),
                field="schedule",
            )
        allowed = set(unordered_pairs(neighborhoods))
        for pair in schedule.pairs:
            if pair not in allowed:
                raise ScheduleError(t("error.schedule.pair", pair=pair), field="pairs")
        self.min_fresh = spec.agent_count if min_fresh is None else int(min_fresh)
        if not 1 <= self.min_fresh <= spec.agent_count:
            raise ValidationError(t("error.cloud.min_fresh", value=self.min_fresh), field="min_fresh")

        self.spec = spec
        self.reg = reg
        self.steps = steps
        self.schedule = schedule
        self.reference = reference
        self.tolerance = tolerance
        self.residual_tolerance = residual_tolerance
        self.record_snapshots = record_snapshots
        self._slices = spec.partition.slices
        self._lower = [spec.box.lower[rows] for rows in self._slices]
        self._upper = [spec.box.upper[rows] for rows in self._slices]
        # With a constant Jacobian the dual pull J_i' mu is fixed for a whole round.
        self._jacobian_blocks: list[np.ndarray] | None = None
        self._dual_pull: list[np.ndarray] | None = None
        if spec.constraints.constant_jacobian:
            self._jacobian_blocks = [
                spec.constraints.partial_jacobian(initial_state, rows).T for rows in self._slices
            ]
            self._refresh_dual_pull(initial_dual)

        agents = [
            AgentLocalState(agent, initial_state.copy(), initial_dual.copy()) for agent in range(spec.agent_count)
        ]
        cloud = CloudState(
            dual=initial_dual.copy(),
            aggregate=initial_state.copy(),
            fresh=np.zeros(spec.agent_count, dtype=bool),
            upload_seqs=np.full(spec.agent_count, -1, dtype=int),
            rho=steps.rho,
            beta=reg.beta,
            ball=ball,
        )
        channels = {(agent, peer): deque() for agent, peers in enumerate(neighborhoods) for peer in peers}
        self.state = SimState(agents, cloud, channels)
        self.cycles = CycleTracker(neighborhoods)
        self.trace = RunTrace(
            problem=spec.name,
            reg=reg,
            steps=steps,
            seed=schedule.seed,
            partition=spec.partition,
            neighborhoods=neighborhoods,
            initial_state=initial_state.copy(),
            initial_dual=initial_dual.copy(),
            events=[] if record_events else None,
        )
        self._round_start_tick = 0
        self._round_start_seq = 0
        self._previous_cloud_state = initial_state.copy()
        self._snapshot = self._take_snapshot()

    def _take_snapshot(self) -> np.ndarray | None:
        if not self.record_snapshots:
            return None
        return np.stack([agent.copy for agent in self.state.agents])

    def _next_seq(self) -> int:
        seq = self.state.seq
        self.state.seq += 1
        return seq

    def _log(self, event: Event) -> None:
        if self.trace.events is not None:
            self.trace.events.append(event)

    def _refresh_dual_pull(self, dual: np.ndarray) -> None:
        if self._jacobian_blocks is not None:
            self._dual_pull = [block @ dual for block in self._jacobian_blocks]

    def _gradient(self, local: AgentLocalState, agent: int) -> np.ndarray:
        if self._dual_pull is None:
            return partial_grad_x_reg(local.copy, local.dual, self.spec, self.reg, agent)
        return (
            self.spec.partial_cost_gradient(local.copy, agent)
            + self.reg.alpha * local.copy[self._slices[agent]]
            + self._dual_pull[agent]
        )

    def _update(self, agent: int, tick: int) -> None:
        local = self.state.agents[agent]
        rows = self._slices[agent]
        gradient = self._gradient(local, agent)
        step = local.copy[rows] - self.steps.gamma * gradient
        local.copy[rows] = np.minimum(np.maximum(step, self._lower[agent]), self._upper[agent])
        seq = self._next_seq()
        local.last_update_seq = seq
        self.cycles.on_update(agent, seq)
        if self.trace.events is not None:
            self._log(Event(seq, tick, UPDATE, agent, CLOUD, local.dual_timestamp, seq, -1, local.copy[rows].copy()))

    def _send(self, sender: int, receiver: int, tick: int, delay: int) -> None:
        local = self.state.agents[sender]
        if self.trace.events is None and delay <= 0 and not self.state.channels[(sender, receiver)]:
            self._hand_over(local, sender, receiver)
            return
        seq = self._next_seq()
        message = StateMessage(
            sender=sender,
            receiver=receiver,
            block=local.copy[self._slices[sender]].copy(),
            dual_timestamp=local.dual_timestamp,
            send_tick=tick,
            delivery_tick=tick + int(delay),
            computed_seq=local.last_update_seq,
            seq=seq,
        )
        self.trace.messages_sent += 1
        if self.trace.events is not None:
            self._log(Event(seq, tick, SEND, sender, receiver, local.dual_timestamp, message.computed_seq, seq))
        channel = self.state.channels[(sender, receiver)]
        if not channel and message.delivery_tick <= tick:
            self._deliver(message, tick)
            return
        if channel:
            # FIFO: a message never overtakes the ones queued ahead of it.
            message.delivery_tick = max(message.delivery_tick, channel[-1].delivery_tick)
        channel.append(message)
        self.state.busy.add((sender, receiver))

    def _hand_over(self, local: AgentLocalState, sender: int, receiver: int) -> None:
        """Instant delivery without a message object; consumes the same sequence numbers as send + deliver."""
        self._next_seq()
        self.trace.messages_sent += 1
        target = self.state.agents[receiver]
        seq = self._next_seq()
        if local.dual_timestamp != target.dual_timestamp:
            self.trace.messages_discarded += 1
            return
        rows = self._slices[sender]
        target.copy[rows] = local.copy[rows]
        self.cycles.on_delivery(sender, receiver, local.last_update_seq, seq)

    def _deliver(self, message: StateMessage, tick: int) -> None:
        receiver = self.state.agents[message.receiver]
        seq = self._next_seq()
        if message.dual_timestamp != receiver.dual_timestamp:
            self.trace.messages_discarded += 1
            if self.trace.events is not None:
                self._log(
                    Event(seq, tick, DISCARD, message.sender, message.receiver, receiver.dual_timestamp,
                          message.computed_seq, message.seq)
                )
            return
        receiver.copy[self._slices[message.sender]] = message.block
        self.cycles.on_delivery(message.sender, message.receiver, message.computed_seq, seq)
        if self.trace.events is not None:
            self._log(
                Event(seq, tick, DELIVER, message.sender, message.receiver, receiver.dual_timestamp,
                      message.computed_seq, message.seq, message.block.copy())
            )

    def _deliver_due(self, tick: int) -> None:
        channels = self.state.channels
        for key in sorted(self.state.busy):
            channel = channels[key]
            while channel and channel[0].delivery_tick <= tick:
                self._deliver(channel.popleft(), tick)
            if not channel:
                self.state.busy.discard(key)

    def _upload(self, agent: int, tick: int) -> None:
        local = self.state.agents[agent]
        cloud = self.state.cloud
        rows = self._slices[agent]
        cloud.aggregate[rows] = local.copy[rows]
        cloud.fresh[agent] = True
        seq = self._next_seq()
        cloud.upload_seqs[agent] = seq
        if self.trace.events is not None:
            self._log(
                Event(seq, tick, UPLOAD, agent, CLOUD, local.dual_timestamp, local.last_update_seq, -1,
                      local.copy[rows].copy())
            )

    def _run_window(self, window: RoundWindow) -> None:
        update_at: dict[int, list[int]] = {}
        for offset, agent in zip(*(index.tolist() for index in np.nonzero(window.updates))):
            update_at.setdefault(offset, []).append(agent)
        exchange_at: dict[int, list[int]] = {}
        for offset, position in zip(*(index.tolist() for index in np.nonzero(window.exchanges))):
            exchange_at.setdefault(offset, []).append(position)
        upload_at: dict[int, list[int]] = {}
        for agent, offset in enumerate(window.uploads.tolist()):
            if offset >= 0:
                upload_at.setdefault(offset, []).append(agent)
        if window.delays is None and not self.state.busy:
            # Nothing can fall due on a tick without events of its own.
            offsets = sorted(update_at.keys() | exchange_at.keys() | upload_at.keys())
        else:
            offsets = range(window.length)
        pairs = self.schedule.pairs
        for offset in offsets:
            tick = window.start + offset
            if self.state.busy:
                self._deliver_due(tick)
            for agent in update_at.get(offset, ()):
                self._update(agent, tick)
            for position in exchange_at.get(offset, ()):
                low, high = pairs[position]
                if window.delays is None:
                    forward = backward = 0
                else:
                    forward, backward = window.delays[offset, position]
                self._send(low, high, tick, forward)
                self._send(high, low, tick, backward)
            for agent in upload_at.get(offset, ()):
                self._upload(agent, tick)

    def _close_window(self, window: RoundWindow) -> bool:
        cloud = self.state.cloud
        fresh = int(cloud.fresh.sum())
        if fresh < self.min_fresh:
            logger.debug("round %d waits: %d fresh blocks at tick %d", cloud.round_index, fresh, window.end)
            return False
        round_index = cloud.round_index
        first_upload_seq = int(cloud.upload_seqs[cloud.fresh].min())
        cycles = self.cycles.cycles_before(first_upload_seq)
        cloud_state = cloud.aggregate.copy()
        dual = cloud.dual
        next_dual = cloud_dual_update(cloud, self.spec, self.min_fresh)
        seq = self._next_seq()
        if self.trace.events is not None:
            self._log(Event(seq, window.end - 1, DUAL, CLOUD, CLOUD, round_index))
        record = RoundRecord(
            index=round_index,
            start_tick=self._round_start_tick,
            end_tick=window.end,
            cycles=cycles,
            fresh=fresh,
            first_upload_seq=first_upload_seq,
            start_seq=self._round_start_seq,
            cloud_state=cloud_state,
            dual=dual,
            next_dual=next_dual,
            snapshot=self._snapshot,
        )
        self.trace.rounds.append(record)
        # Every agent receives mu(t+1) at the same tick k_{t+1}.
        for agent in self.state.agents:
            agent.dual = next_dual
            agent.dual_timestamp = cloud.round_index
        self._refresh_dual_pull(next_dual)
        self._round_start_tick = window.end
        self._round_start_seq = self.state.seq
        self.cycles.restart(seq)
        self._snapshot = self._take_snapshot()
        if round_index % 1000 == 0:
            logger.debug("round %d: tick %d, c(t)=%d, fresh=%d", round_index, window.end, cycles, fresh)
        return self._should_stop(record)

    def _should_stop(self, record: RoundRecord) -> bool:
        # With a known saddle point only the distance to it ends a run.
        if self.reference is not None and self.tolerance is not None:
            primal_error = np.linalg.norm(record.cloud_state - self.reference.state)
            dual_error = np.linalg.norm(record.dual - self.reference.dual)
            if primal_error < self.tolerance and dual_error < self.tolerance:
                self.trace.stop_reason = STOP_TOLERANCE
                return True
            return False
        if self.residual_tolerance is not None:
            residual = np.sqrt(
                np.sum((record.next_dual - record.dual) ** 2)
                + np.sum((record.cloud_state - self._previous_cloud_state) ** 2)
            )
            if residual < self.residual_tolerance:
                self.trace.stop_reason = STOP_RESIDUAL
                return True
        self._previous_cloud_state = record.cloud_state
        return False

    def run(self) -> RunTrace:
        logger.info(
            "simulating %s: alpha=%g beta=%g gamma=%.4g rho=%.4g seed=%d",
            self.spec.name, self.reg.alpha, self.reg.beta, self.steps.gamma, self.steps.rho, self.schedule.seed,
        )
        window = None
        for window in self.schedule.windows():
            self._run_window(window)
            if self._close_window(window):
                break
        else:
            self.trace.stop_reason = STOP_HORIZON
        self.trace.ticks = window.end if window is not None else 0
        logger.info(
            "%s finished after %d rounds, %d ticks (%s); %d of %d messages discarded",
            self.spec.name, self.trace.round_count, self.trace.ticks, self.trace.stop_reason,
            self.trace.messages_discarded, self.trace.messages_sent,
        )
        return self.trace


def run_async(
    spec: ProblemSpec,
    reg: RegParams,
    steps: StepSizes,
    schedule: SimSchedule,
    initial_state: np.ndarray,
    initial_dual: np.ndarray,
    **options,
) -> RunTrace:
    """Simulate with the all-fresh cloud gate."""
    options.pop("min_fresh", None)
    return AsyncSimulator(spec, reg, steps, schedule, initial_state, initial_dual, **options).run()


def run_async_partial(
    spec: ProblemSpec,
    reg: RegParams,
    steps: StepSizes,
    schedule: SimSchedule,
    initial_state: np.ndarray,
    initial_dual: np.ndarray,
    min_fresh: int = 1,
    **options,
) -> RunTrace:
    """Simulate with a cloud that fires once `min_fresh` blocks are fresh; stale blocks are reused."""
    return AsyncSimulator(
        spec, reg, steps, schedule, initial_state, initial_dual, min_fresh=min_fresh, **options
    ).run()
