from __future__ import annotations

from bisect import bisect_left
from typing import Sequence

from .trace import DELIVER, UPDATE, RunTrace


class CycleTracker:
    """Counts completed cycles inside one cloud round.

    A cycle closes once every agent has computed an update since the cycle opened and, for
    every essential pair (i, j), a state of agent i computed after the opening has reached j.
    Event sequence numbers order everything, including events sharing a tick.
    """

    def __init__(self, neighborhoods: Sequence[frozenset[int]]):
        self._neighborhoods = tuple(neighborhoods)
        self.completed: list[int] = []
        self.restart(-1)

    def restart(self, start_seq: int) -> None:
        self.completed = []
        self._open(start_seq)

    def _open(self, start_seq: int) -> None:
        self._opened_at = start_seq
        self._waiting_updates = set(range(len(self._neighborhoods)))
        self._waiting_links = {(agent, peer) for agent, peers in enumerate(self._neighborhoods) for peer in peers}

    def _close_if_done(self, seq: int) -> None:
        if not self._waiting_updates and not self._waiting_links:
            self.completed.append(seq)
            self._open(seq)

    def on_update(self, agent: int, seq: int) -> None:
        if agent in self._waiting_updates:
            self._waiting_updates.discard(agent)
            self._close_if_done(seq)

    def on_delivery(self, sender: int, receiver: int, computed_seq: int, seq: int) -> None:
        if computed_seq > self._opened_at and (sender, receiver) in self._waiting_links:
            self._waiting_links.discard((sender, receiver))
            self._close_if_done(seq)

    def cycles_before(self, seq: int) -> int:
        return bisect_left(self.completed, seq)


def count_cycles(trace: RunTrace, index: int) -> int:
    """c(t): cycles completed between the dual broadcast and the first upload the cloud consumed.

    Replays the event log when the trace carries one, otherwise returns the count the
    simulator recorded online.
    """
    record = trace.rounds[index]
    if trace.events is None:
        return record.cycles
    tracker = CycleTracker(trace.neighborhoods)
    tracker.restart(record.start_seq - 1)
    for event in trace.round_events(index):
        if event.kind == UPDATE:
            tracker.on_update(event.agent, event.seq)
        elif event.kind == DELIVER:
            tracker.on_delivery(event.agent, event.peer, event.computed_seq, event.seq)
    return tracker.cycles_before(record.first_upload_seq)
