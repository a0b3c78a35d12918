"""Finite-horizon verdicts for weakly / strongly persistent trace properties."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Sequence

HOLDS = "holds"
FALSIFIED = "falsified"
INCONCLUSIVE = "inconclusive"

WEAK = "weak"
STRONG = "strong"


class HorizonTooShort(ValueError):
    pass


@dataclass(frozen=True)
class ReplayState:
    """What a trace property gets to look at."""

    time: float
    heads: tuple
    dag: object
    following: tuple


@dataclass(frozen=True)
class TraceProperty:
    name: str
    predicate: Callable[[ReplayState], bool]

    def __call__(self, state: ReplayState) -> int:
        return 1 if self.predicate(state) else 0


def heads_consistent(state: ReplayState) -> bool:
    """Every node holds the same head."""
    return len(set(state.heads)) == 1


HEADS_CONSISTENT = TraceProperty("heads_consistent", heads_consistent)


def replay_states(trace) -> Iterator[ReplayState]:
    """State after all events at each distinct event time, starting at t=0."""
    g = trace.dag.genesis
    heads = [g] * trace.n_nodes
    following = tuple(trace.following)
    last_t = 0.0
    for r in trace.records:
        if r.t != last_t:
            yield ReplayState(last_t, tuple(heads), trace.dag, following)
            last_t = r.t
        if r.extra and "h" in r.extra:
            heads[r.node] = r.extra["h"][-1][1]
    yield ReplayState(last_t, tuple(heads), trace.dag, following)


def sample_property(trace, prop) -> list[tuple[float, int]]:
    return [(s.time, 1 if prop(s) else 0) for s in replay_states(trace)]


def persistence_verdict(samples: Sequence[tuple[float, int]], horizon: float, warmup: float,
                        mode: str, margin: Optional[float] = None) -> str:
    """Judge a piecewise-constant 0/1 signal on [0, horizon].

    `samples` are (time, value) change points; the value holds until the next
    sample. Candidate cut-off times T' range over [warmup, horizon - margin].
    strong: holds if the signal is 1 from some candidate T' to the horizon,
    falsified otherwise. weak: holds if the signal is 1 somewhere after the
    last candidate, inconclusive otherwise (a finite trace cannot refute it).
    """
    if horizon <= warmup:
        raise HorizonTooShort(f"horizon {horizon} does not exceed warmup {warmup}")
    if margin is None:
        margin = 0.25 * (horizon - warmup)
    if not margin > 0:
        raise ValueError("margin must be positive")
    if mode not in (WEAK, STRONG):
        raise ValueError(f"mode must be {WEAK!r} or {STRONG!r}")
    last_candidate = horizon - margin
    if last_candidate < warmup:
        return INCONCLUSIVE
    pts = sorted((t, v) for t, v in samples if t <= horizon)
    if not pts:
        return INCONCLUSIVE
    if mode == STRONG:
        if pts[-1][1] != 1:
            return FALSIFIED
        # start of the final run of ones
        start = pts[-1][0]
        for t, v in reversed(pts):
            if v != 1:
                break
            start = t
        return HOLDS if start <= last_candidate else FALSIFIED
    # weak: is there a 1 at some time strictly after last_candidate?
    value_at = None
    for t, v in pts:
        if t <= last_candidate:
            value_at = v
        elif v == 1:
            return HOLDS
    return HOLDS if value_at == 1 else INCONCLUSIVE


def persistence_check(trace, prop, warmup: float = 0.0, mode: str = WEAK,
                      margin: Optional[float] = None) -> str:
    if trace.horizon <= warmup:
        raise HorizonTooShort(f"horizon {trace.horizon} does not exceed warmup {warmup}")
    return persistence_verdict(sample_property(trace, prop), trace.horizon, warmup, mode, margin)
