"""Fork-choice and finality rules."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from ..chain import BlockDag

FIRST_SEEN = "first_seen"
UNIFORM = "uniform"


class EmptyView(ValueError):
    pass


@dataclass(frozen=True)
class MostWork:
    """Heaviest-chain rule; `tiebreak` is first_seen or uniform."""

    tiebreak: str = FIRST_SEEN
    switch_prob: float = 0.5

    def __post_init__(self):
        if self.tiebreak not in (FIRST_SEEN, UNIFORM):
            raise ValueError(f"unknown tiebreak {self.tiebreak!r}")


@dataclass(frozen=True)
class KConfirmations:
    k: int = 6

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class QuorumCommit:
    quorum: int

    def __post_init__(self):
        if self.quorum < 1:
            raise ValueError("quorum must be >= 1")


FinalityRule = Union[KConfirmations, QuorumCommit]


def prefer(dag: BlockDag, head: int, candidate: int, rule: MostWork,
           rng: Optional[random.Random] = None) -> int:
    """Incremental form of the most-work rule.

    Returns the head a node holds after learning `candidate`, given that
    `head` was the rule's choice over everything seen before.
    """
    w_head = dag.cumulative_work(head)
    w_cand = dag.cumulative_work(candidate)
    if w_cand > w_head:
        return candidate
    if w_cand == w_head and candidate != head and rule.tiebreak == UNIFORM:
        if rng is None:
            raise ValueError("uniform tiebreak needs an rng")
        if rng.random() < rule.switch_prob:
            return candidate
    return head


def fork_choice_most_work(view: Iterable[int], dag: BlockDag, tiebreak: str = FIRST_SEEN,
                          seen_order: Optional[Sequence[int]] = None,
                          rng: Optional[random.Random] = None) -> int:
    """argmax of cumulative work over `view`.

    Ties are settled by the order in which blocks were seen: first_seen keeps
    the earliest, uniform switches to each later tie with probability 0.5.
    Without a seen order, ascending block id stands in for it.
    """
    members = set(view)
    if not members:
        raise EmptyView("fork choice over an empty view")
    if seen_order is None:
        order = sorted(members)
    else:
        order = [b for b in seen_order if b in members]
        if len(order) != len(members):
            missing = members.difference(order)
            raise ValueError(f"seen_order lacks {sorted(missing)[:5]}")
    rule = MostWork(tiebreak)
    best = order[0]
    for b in order[1:]:
        best = prefer(dag, best, b, rule, rng)
    return best


def finality_k_confirmations(view: Iterable[int], dag: BlockDag, k: int) -> set[int]:
    """Blocks B such that some B' in `view` has B = P^j(B') with j >= k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    final: set[int] = set()
    # deepest-first so that shared prefixes are walked once
    tips = sorted(set(view), key=dag.height, reverse=True)
    for b in tips:
        h = dag.height(b)
        if h < k:
            continue
        anc = dag.ancestor_at(b, h - k)
        for x in dag.walk(anc):
            if x in final:
                break
            final.add(x)
    return final


def final_tip(dag: BlockDag, head: int, k: int) -> Optional[int]:
    """Deepest k-confirmed block on the chain of `head`, or None."""
    h = dag.height(head)
    if h < k:
        return None
    return dag.ancestor_at(head, h - k)
