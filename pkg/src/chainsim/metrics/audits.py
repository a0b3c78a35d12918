"""Forks, overturns, orphans and the safety / liveness audits."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

from ..chain import BlockDag
from ..protocols.forkchoice import FinalityRule, KConfirmations, QuorumCommit, final_tip


class Fork(NamedTuple):
    start: float
    end: float
    tips: frozenset


class Overturn(NamedTuple):
    block: int
    node: int
    time: float


class SafetyViolation(NamedTuple):
    node: int
    block: int
    t_final: float
    t_violation: float


@dataclass(frozen=True)
class LivenessFault:
    kind: str                  # "tx" or "stall"
    start: float
    end: float
    tx: Optional[int] = None
    node: Optional[int] = None


def head_history(trace, nodes: Optional[Iterable[int]] = None) -> dict[int, list[tuple[float, int]]]:
    """Per node, [(t, head)] starting with (0, genesis)."""
    wanted = set(range(trace.n_nodes) if nodes is None else nodes)
    g = trace.dag.genesis
    hist = {n: [(0.0, g)] for n in sorted(wanted)}
    for t, n, _old, new in trace.head_changes():
        if n in wanted:
            hist[n].append((t, new))
    return hist


def _heads_form_chain(dag: BlockDag, heads: Iterable[int]) -> bool:
    ordered = sorted(set(heads), key=dag.height)
    return all(dag.is_ancestor(a, b) for a, b in zip(ordered, ordered[1:]))


def detect_forks(trace, nodes: Optional[Iterable[int]] = None) -> list[Fork]:
    """Maximal intervals during which protocol-following nodes hold incompatible heads.

    The state is judged after all events sharing a timestamp, so zero-latency
    hand-offs do not register as forks.
    """
    members = sorted(trace.following if nodes is None else nodes)
    if len(members) < 2:
        return []
    dag = trace.dag
    heads = {n: dag.genesis for n in members}
    forks: list[Fork] = []
    start = None
    tips: set = set()
    changes = [(t, n, new) for t, n, _o, new in trace.head_changes() if n in heads]
    i = 0
    while i < len(changes):
        t = changes[i][0]
        while i < len(changes) and changes[i][0] == t:
            heads[changes[i][1]] = changes[i][2]
            i += 1
        forked = not _heads_form_chain(dag, heads.values())
        if forked:
            if start is None:
                start = t
                tips = set()
            tips.update(heads.values())
        elif start is not None:
            forks.append(Fork(start, t, frozenset(tips)))
            start = None
    if start is not None:
        forks.append(Fork(start, trace.horizon, frozenset(tips)))
    return forks


def detect_overturns(trace, nodes: Optional[Iterable[int]] = None) -> list[Overturn]:
    """(B, n, t) for every block dropped from n's head chain at t."""
    dag = trace.dag
    wanted = None if nodes is None else set(nodes)
    out = []
    for t, n, old, new in trace.head_changes():
        if wanted is not None and n not in wanted:
            continue
        base = dag.common_prefix(old, new)
        for b in dag.branch(old, base):
            out.append(Overturn(b, n, t))
    return out


def detect_orphans(state) -> set[int]:
    """Blocks outside every node's head chain; accepts a SystemState or a Trace."""
    state = getattr(state, "final_state", state)
    dag = state.dag
    on_chain: set[int] = set()
    for node in state.nodes:
        for b in dag.walk(node.head):
            if b in on_chain:
                break
            on_chain.add(b)
    return set(dag.blocks) - on_chain


def default_finality(trace) -> FinalityRule:
    cfg = trace.config
    if cfg.protocol == "nakamoto":
        return KConfirmations(cfg.nakamoto.confirmations)
    return QuorumCommit(cfg.ibft.quorum)


def _final_tip(dag: BlockDag, head: int, rule: FinalityRule) -> int:
    if isinstance(rule, KConfirmations):
        tip = final_tip(dag, head, rule.k)
        return dag.genesis if tip is None else tip
    # BFT heads only move to committed blocks
    return head


def _is_final(dag: BlockDag, head: int, b: int, rule: FinalityRule) -> bool:
    return dag.is_ancestor(b, _final_tip(dag, head, rule))


def audit_safety(trace, finality_rule: Optional[FinalityRule] = None,
                 nodes: Optional[Iterable[int]] = None) -> list[SafetyViolation]:
    """Blocks a node held as final and later stopped holding as final."""
    rule = finality_rule or default_finality(trace)
    dag = trace.dag
    members = trace.following if nodes is None else list(nodes)
    hist = head_history(trace, members)
    out = []
    for n in sorted(hist):
        h = hist[n]
        for j in range(1, len(h)):
            t, new = h[j]
            old = h[j - 1][1]
            base = dag.common_prefix(old, new)
            for b in dag.branch(old, base):
                if not _is_final(dag, old, b, rule):
                    continue
                # walk back to the start of the stretch in which b was final
                i = j - 1
                while i > 0 and _is_final(dag, h[i - 1][1], b, rule):
                    i -= 1
                out.append(SafetyViolation(n, b, h[i][0], t))
    return out


def audit_agreement(trace, finality_rule: Optional[FinalityRule] = None,
                    nodes: Optional[Iterable[int]] = None) -> list[tuple[int, int]]:
    """Pairs of incompatible blocks held final by protocol-following nodes."""
    rule = finality_rule or default_finality(trace)
    dag = trace.dag
    members = trace.following if nodes is None else list(nodes)
    tips: set[int] = set()
    for n, h in head_history(trace, members).items():
        tips.update(_final_tip(dag, head, rule) for _t, head in h)
    ordered = sorted(tips, key=lambda b: (dag.height(b), b))
    conflicts = []
    for a, b in zip(ordered, ordered[1:]):
        if not dag.is_ancestor(a, b):
            conflicts.append((a, b))
    return conflicts


def finalization_times(trace, n: int, finality_rule: Optional[FinalityRule] = None) -> dict[int, float]:
    """First time each block became final in node n's view."""
    rule = finality_rule or default_finality(trace)
    dag = trace.dag
    out: dict[int, float] = {dag.genesis: 0.0}
    prev = dag.genesis
    for t, head in head_history(trace, [n])[n]:
        tip = _final_tip(dag, head, rule)
        if tip == prev:
            continue
        base = dag.common_prefix(prev, tip)
        for b in dag.branch(tip, base):
            out.setdefault(b, t)
        prev = tip
    return out


def audit_liveness(trace, bound: float, finality_rule: Optional[FinalityRule] = None,
                   nodes: Optional[Iterable[int]] = None) -> list[LivenessFault]:
    """Transactions not final at their creator within `bound`, plus global stalls.

    Transactions created later than horizon - bound cannot be judged and are
    skipped. A stall is any stretch longer than `bound` in which no
    protocol-following node extends its final chain.
    """
    if not bound > 0:
        raise ValueError("bound must be positive")
    dag = trace.dag
    members = sorted(trace.following if nodes is None else nodes)
    horizon = trace.horizon
    faults: list[LivenessFault] = []
    fin = {n: finalization_times(trace, n, finality_rule) for n in members}

    tx_final: dict[int, dict[int, float]] = {n: {} for n in members}
    for n in members:
        for b, t in fin[n].items():
            for tx in dag.blocks[b].txs:
                prev = tx_final[n].get(tx)
                if prev is None or t < prev:
                    tx_final[n][tx] = t
    for tx in sorted(trace.transactions.values(), key=lambda x: x.id):
        if tx.creator not in tx_final or tx.created_at + bound > horizon:
            continue
        t = tx_final[tx.creator].get(tx.id)
        if t is None or t - tx.created_at > bound:
            faults.append(LivenessFault("tx", tx.created_at,
                                        horizon if t is None else t, tx.id, tx.creator))

    progress = sorted({t for n in members for b, t in fin[n].items() if b != dag.genesis})
    marks = [0.0] + [t for t in progress if t <= horizon] + [horizon]
    for a, b in zip(marks, marks[1:]):
        if b - a > bound:
            faults.append(LivenessFault("stall", a, b))
    return faults
