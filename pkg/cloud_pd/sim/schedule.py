from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..error_handler import ScheduleError
from ..i18n import t
from ..problem.spec import unordered_pairs

logger = logging.getLogger(__name__)

RANDOM = "random"
LOCKSTEP = "lockstep"


@dataclass(frozen=True)
class ScheduleParams:
    update_probability: float = 0.05
    edge_probability: float = 0.05
    round_length: tuple[int, int] = (5, 100)
    delay_range: tuple[int, int] = (0, 0)
    upload_probability: float = 1.0
    horizon_rounds: int = 500_000
    ensure_updates: bool = True

    def __post_init__(self) -> None:
        for field in ("update_probability", "edge_probability", "upload_probability"):
            value = getattr(self, field)
            if not 0.0 <= value <= 1.0:
                raise ScheduleError(t("error.schedule.probability", field=field, value=value), field=field)
        shortest, longest = self.round_length
        if not 1 <= shortest <= longest:
            raise ScheduleError(t("error.schedule.round_length", value=self.round_length), field="round_length")
        fastest, slowest = self.delay_range
        if not 0 <= fastest <= slowest:
            raise ScheduleError(t("error.schedule.delay", value=self.delay_range), field="delay_range")
        if self.horizon_rounds < 1:
            raise ScheduleError(t("error.positive", field="horizon_rounds", value=self.horizon_rounds), field="horizon_rounds")


@dataclass(frozen=True, eq=False)
class RoundWindow:
    """One schedule window [start, start + length) with its per-tick event masks.

    `updates` is (length, N), `exchanges` is (length, P) over the unordered essential pairs,
    `delays` is (length, P, 2) holding the delay of the low->high and high->low message, or None
    when every message is delivered instantly. `uploads` holds each agent's cloud-send offset,
    -1 when the agent does not upload in this window.
    """

    index: int
    start: int
    updates: np.ndarray
    exchanges: np.ndarray
    delays: np.ndarray | None
    uploads: np.ndarray

    @property
    def length(self) -> int:
        return self.updates.shape[0]

    @property
    def end(self) -> int:
        return self.start + self.length


@dataclass(frozen=True, eq=False)
class SimSchedule:
    """A seeded realization of update, exchange, delay and upload times.

    Windows are generated lazily from (seed, window index), so a horizon of many rounds costs
    nothing until it is simulated and any prefix is reproducible bit for bit.
    """

    agent_count: int
    pairs: tuple[tuple[int, int], ...]
    params: ScheduleParams
    seed: int
    mode: str = RANDOM

    def _random_window(self, index: int, start: int) -> RoundWindow:
        params = self.params
        rng = np.random.default_rng([self.seed, index])
        shortest, longest = params.round_length
        length = int(rng.integers(shortest, longest + 1))
        updates = rng.random((length, self.agent_count)) < params.update_probability
        if params.ensure_updates:
            for agent in np.flatnonzero(~updates.any(axis=0)):
                updates[rng.integers(length), agent] = True
        exchanges = rng.random((length, len(self.pairs))) < params.edge_probability
        fastest, slowest = params.delay_range
        delays = None
        if slowest > 0:
            delays = rng.integers(fastest, slowest + 1, size=(length, len(self.pairs), 2))
        uploads = rng.integers(0, length, size=self.agent_count)
        if params.upload_probability < 1.0:
            uploads[rng.random(self.agent_count) >= params.upload_probability] = -1
        return RoundWindow(index, start, updates, exchanges, delays, uploads)

    def _lockstep_window(self, index: int, start: int) -> RoundWindow:
        # Upload the pre-update state at the first tick, update and exchange at the second.
        updates = np.zeros((2, self.agent_count), dtype=bool)
        updates[1] = True
        exchanges = np.zeros((2, len(self.pairs)), dtype=bool)
        exchanges[1] = True
        uploads = np.zeros(self.agent_count, dtype=int)
        return RoundWindow(index, start, updates, exchanges, None, uploads)

    def window(self, index: int, start: int) -> RoundWindow:
        if self.mode == LOCKSTEP:
            return self._lockstep_window(index, start)
        return self._random_window(index, start)

    def windows(self) -> Iterator[RoundWindow]:
        start = 0
        for index in range(self.params.horizon_rounds):
            window = self.window(index, start)
            start = window.end
            yield window


def _check_pairs(pairs: Sequence[tuple[int, int]], allowed: set[tuple[int, int]], agent_count: int) -> None:
    for low, high in pairs:
        if not (0 <= low < agent_count and 0 <= high < agent_count) or (min(low, high), max(low, high)) not in allowed:
            raise ScheduleError(t("error.schedule.pair", pair=(low, high)), field="pairs")


def generate_schedule(
    seed: int,
    params: ScheduleParams,
    neighborhoods: Sequence[frozenset[int]],
    pairs: Sequence[tuple[int, int]] | None = None,
) -> SimSchedule:
    """Randomized schedule over the essential pairs; an explicit pair list must be a subset of them."""
    allowed = unordered_pairs(neighborhoods)
    if pairs is None:
        pairs = allowed
    else:
        _check_pairs(pairs, set(allowed), len(neighborhoods))
        pairs = tuple(sorted((min(low, high), max(low, high)) for low, high in pairs))
    logger.debug("schedule seed=%d agents=%d pairs=%d %s", seed, len(neighborhoods), len(pairs), params)
    return SimSchedule(len(neighborhoods), tuple(pairs), params, int(seed))


def lockstep_schedule(neighborhoods: Sequence[frozenset[int]], rounds: int) -> SimSchedule:
    """Degenerate synchronous schedule reproducing the Jacobi iteration round for round."""
    params = ScheduleParams(
        update_probability=1.0, edge_probability=1.0, round_length=(2, 2), horizon_rounds=rounds
    )
    return SimSchedule(len(neighborhoods), unordered_pairs(neighborhoods), params, 0, LOCKSTEP)
