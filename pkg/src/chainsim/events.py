"""Simulation events, the event queue and the actions strategies return."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Optional

BLOCK_MINED = "BlockMined"
BLOCK_ARRIVAL = "BlockArrival"
TX_CREATED = "TxCreated"
TX_ARRIVAL = "TxArrival"
PROTOCOL_MSG = "ProtocolMsgArrival"
ROUND_TIMEOUT = "RoundTimeout"
PARTITION_CHANGE = "PartitionChange"
STRATEGY_WAKE = "StrategyWake"
# internal: periodic state capture, exported as "snapshot" records
SNAPSHOT = "snapshot"

EVENT_KINDS = (BLOCK_MINED, BLOCK_ARRIVAL, TX_CREATED, TX_ARRIVAL, PROTOCOL_MSG,
               ROUND_TIMEOUT, PARTITION_CHANGE, STRATEGY_WAKE)


class TimeInPast(ValueError):
    pass


@dataclass(slots=True)
class Event:
    time: float
    seq: int
    kind: str
    node: Optional[int] = None
    payload: Any = None

    def __lt__(self, other: "Event") -> bool:
        return (self.time, self.seq) < (other.time, other.seq)


class EventQueue:
    """Min-heap ordered by (time, seq)."""

    def __init__(self):
        self._heap: list[tuple[float, int, Event]] = []
        self.clock = 0.0
        self._next_seq = 0

    def __len__(self) -> int:
        return len(self._heap)

    def next_seq(self) -> int:
        s = self._next_seq
        self._next_seq += 1
        return s

    def schedule(self, e: Event) -> None:
        if e.time < self.clock:
            raise TimeInPast(f"event at {e.time} scheduled with clock at {self.clock}")
        if e.seq >= self._next_seq:
            self._next_seq = e.seq + 1
        heapq.heappush(self._heap, (e.time, e.seq, e))

    def push(self, time: float, kind: str, node: Optional[int] = None, payload: Any = None) -> Event:
        e = Event(time, self.next_seq(), kind, node, payload)
        self.schedule(e)
        return e

    def peek_time(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> Event:
        t, _, e = heapq.heappop(self._heap)
        self.clock = t
        return e


def schedule(queue: EventQueue, e: Event) -> EventQueue:
    queue.schedule(e)
    return queue


# Actions returned by strategies; the simulator executes them in order.

@dataclass(frozen=True, slots=True)
class Adopt:
    """Switch head (and mining target) to `block`."""
    block: int


@dataclass(frozen=True, slots=True)
class Publish:
    """Announce own blocks to every neighbor."""
    blocks: tuple[int, ...]
    # honest nodes seeing a published equal-work tip switch to it with this probability
    rush: float = 0.0


@dataclass(frozen=True, slots=True)
class Relay:
    """Forward a received block to every neighbor except `exclude`."""
    block: int
    exclude: Optional[int] = None


@dataclass(frozen=True, slots=True)
class Broadcast:
    """Send a consensus message to every other keyed node."""
    msg: Any


@dataclass(frozen=True, slots=True)
class Propose:
    key: int
    round: int
    parent: int
    reuse: Optional[int] = None


@dataclass(frozen=True, slots=True)
class Finalize:
    block: int


@dataclass(frozen=True, slots=True)
class AdvanceRound:
    round: int


@dataclass(slots=True)
class Decision:
    """What a strategy sees: the node, the event and the protocol's prescription."""
    node: Any
    event: Event
    prescribed: list = field(default_factory=list)
    dag: Any = None
    rng: Any = None
    sim: Any = None
