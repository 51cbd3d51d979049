from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..analysis.norms import BlockPartition
from ..core.lagrangian import RegParams, StepSizes

CLOUD = -1

UPDATE = "update"
SEND = "send"
DELIVER = "deliver"
DISCARD = "discard"
UPLOAD = "upload"
DUAL = "dual"


@dataclass(slots=True)
class Event:
    seq: int
    tick: int
    kind: str
    agent: int
    peer: int = CLOUD
    round_index: int = 0
    computed_seq: int = -1
    message_seq: int = -1
    value: np.ndarray | None = None


@dataclass(frozen=True, eq=False, slots=True)
class RoundRecord:
    index: int
    start_tick: int
    end_tick: int
    cycles: int
    fresh: int
    first_upload_seq: int
    start_seq: int
    cloud_state: np.ndarray
    dual: np.ndarray
    next_dual: np.ndarray
    snapshot: np.ndarray | None = None


@dataclass(eq=False)
class RunTrace:
    problem: str
    reg: RegParams
    steps: StepSizes
    seed: int
    partition: BlockPartition
    neighborhoods: tuple[frozenset[int], ...]
    initial_state: np.ndarray
    initial_dual: np.ndarray
    rounds: list[RoundRecord] = field(default_factory=list)
    events: list[Event] | None = None
    messages_sent: int = 0
    messages_discarded: int = 0
    ticks: int = 0
    stop_reason: str = ""

    @property
    def agent_count(self) -> int:
        return self.partition.count

    @property
    def round_count(self) -> int:
        return len(self.rounds)

    @property
    def cloud_states(self) -> np.ndarray:
        return np.array([record.cloud_state for record in self.rounds]).reshape(-1, self.partition.dimension)

    @property
    def duals(self) -> np.ndarray:
        return np.array([record.dual for record in self.rounds], dtype=float).reshape(len(self.rounds), self.initial_dual.size)

    @property
    def cycles(self) -> np.ndarray:
        return np.array([record.cycles for record in self.rounds], dtype=int)

    @property
    def fresh_counts(self) -> np.ndarray:
        return np.array([record.fresh for record in self.rounds], dtype=int)

    @property
    def final_state(self) -> np.ndarray:
        return self.rounds[-1].cloud_state if self.rounds else self.initial_state

    @property
    def final_dual(self) -> np.ndarray:
        return self.rounds[-1].next_dual if self.rounds else self.initial_dual

    def round_events(self, index: int) -> list[Event]:
        """Events from the start of cloud round `index` up to (excluding) its dual broadcast."""
        if self.events is None:
            return []
        record = self.rounds[index]
        return [
            event for event in self.events if event.round_index == index and event.seq >= record.start_seq
        ]
