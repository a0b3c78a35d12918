"""Throughput, message complexity and scalability sweeps."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from ..strategies import EmptyTrace

CONSENSUS_KINDS = {
    "nakamoto": ("block",),
    "ibft": ("proposal", "prepare", "commit", "round_change"),
}


class NoFinalizedBlocks(ValueError):
    pass


def throughput(trace) -> float:
    """Distinct transactions on the reference chain's finalized prefix per second."""
    if trace is None or trace.horizon <= 0:
        raise EmptyTrace("throughput needs a positive horizon")
    dag = trace.dag
    txs = set()
    for b in trace.reference_chain():
        txs.update(dag.blocks[b].txs)
    return len(txs) / trace.horizon


@dataclass
class MessageComplexity:
    per_kind: dict
    per_decision: float
    decisions: int
    totals: dict
    unattributed: dict = field(default_factory=dict)


def _decision_times(trace, decisions: Sequence[int]) -> dict[int, float]:
    if trace.config.protocol == "ibft":
        first: dict[int, float] = {}
        for t, _n, b in trace.finalizations():
            first.setdefault(b, t)
        return {b: first.get(b, trace.dag.blocks[b].timestamp) for b in decisions}
    return {b: trace.dag.blocks[b].timestamp for b in decisions}


def message_complexity(trace) -> MessageComplexity:
    """Consensus messages sent per finalized decision, by kind.

    A message about a decided block counts toward that block. Everything
    else (round changes, proposals that never made it) counts toward the
    next decision made after it was sent; traffic after the last decision
    is reported as unattributed.
    """
    decisions = trace.reference_chain()[1:]
    if not decisions:
        raise NoFinalizedBlocks("no finalized blocks on the reference chain")
    kinds = CONSENSUS_KINDS[trace.config.protocol]
    decided = set(decisions)
    times = _decision_times(trace, decisions)
    ordered = sorted(times.values())
    totals = {k: 0 for k in kinds}
    unattributed = {k: 0 for k in kinds}
    for t, _node, kind, block, _rnd, count in trace.sends():
        if kind not in totals:
            continue
        if block in decided or bisect.bisect_left(ordered, t) < len(ordered):
            totals[kind] += count
        else:
            unattributed[kind] += count
    k = len(decisions)
    per_kind = {kind: c / k for kind, c in totals.items()}
    return MessageComplexity(per_kind, sum(totals.values()) / k, k, totals, unattributed)


@dataclass
class SweepPoint:
    value: float
    scale: float
    mean: float
    stderr: float
    samples: list


@dataclass
class SweepResult:
    points: list
    positive: bool
    scalable: bool
    reason: str = ""

    def curve(self) -> list[tuple[float, float]]:
        return [(p.value, p.mean) for p in self.points]


def _mean_se(xs: Sequence[float]) -> tuple[float, float]:
    n = len(xs)
    mean = sum(xs) / n
    if n < 2:
        return mean, 0.0
    var = sum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, math.sqrt(var / n)


def scalability_sweep(family: Callable, values: Sequence, measure: Callable,
                      seeds: Iterable[int] = (0,), positive: bool = True,
                      scale: Optional[Callable] = None, horizon: Optional[float] = None,
                      z: float = 2.0) -> SweepResult:
    """Evaluate `measure` on runs of `family(value)` and judge scalability.

    Points are ordered by total consensus-critical resource (`scale(cfg)`,
    default: sum of every node's resources). The measure scales iff each
    step up in resources improves it by more than z standard errors of the
    difference (improve = increase for a positive measure, decrease for a
    negative one). A measure that does not move is not scalable.
    """
    from ..config import ConfigInvalid
    from ..simnet import run
    values = list(values)
    seeds = list(seeds)
    if len(values) < 3:
        raise ConfigInvalid("a scalability sweep needs at least 3 points")
    if not seeds:
        raise ConfigInvalid("no seeds")
    scale = scale or (lambda cfg: sum(sum(n.resources.values()) + len(n.keys) for n in cfg.nodes))
    points = []
    for v in values:
        cfg = family(v)
        samples = [float(measure(run(cfg, horizon, s))) for s in seeds]
        mean, se = _mean_se(samples)
        points.append(SweepPoint(v, scale(cfg), mean, se, samples))
    points.sort(key=lambda p: p.scale)
    sign = 1.0 if positive else -1.0
    for a, b in zip(points, points[1:]):
        if b.scale == a.scale:
            raise ConfigInvalid("two sweep points have the same resource total")
        gain = sign * (b.mean - a.mean)
        noise = z * math.hypot(a.stderr, b.stderr)
        if not gain > noise:
            return SweepResult(points, positive, False,
                               f"no significant improvement from {a.value} to {b.value}")
    return SweepResult(points, positive, True, "improves at every step")


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least squares y = a + b x; returns (a, b, r_squared)."""
    from scipy import stats
    res = stats.linregress(xs, ys)
    return float(res.intercept), float(res.slope), float(res.rvalue ** 2)


def quadratic_fit(ks: Sequence[float], ys: Sequence[float]) -> tuple[float, list, float]:
    """Fit y = c k^2 through the origin.

    Returns c, the per-point relative errors and the normalized residual
    norm ||y - c k^2|| / ||y||.
    """
    num = sum(y * k * k for k, y in zip(ks, ys))
    den = sum(k ** 4 for k in ks)
    c = num / den
    rel = [(c * k * k - y) / y for k, y in zip(ks, ys)]
    resid = math.sqrt(sum((y - c * k * k) ** 2 for k, y in zip(ks, ys)))
    norm = math.sqrt(sum(y * y for y in ys))
    return c, rel, resid / norm
