"""Istanbul-BFT round machine.

Rounds are numbered globally. In round r the holder of key rotation[r mod k]
proposes a block on its head; every keyed node broadcasts a Prepare for a
valid proposal, a Commit once it has a prepare quorum, and finalizes once it
has a commit quorum. A node that sent a Commit for B is locked on B until it
finalizes at B's height, so two quorums can never finalize conflicting
blocks. If a round times out without progress, nodes ask for round r+1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..chain import BlockDag
from ..config import IbftParams
from ..events import AdvanceRound, Broadcast, Finalize, Propose

PROPOSAL = "proposal"
PREPARE = "prepare"
COMMIT = "commit"
ROUND_CHANGE = "round_change"
MESSAGE_KINDS = (PROPOSAL, PREPARE, COMMIT, ROUND_CHANGE)


@dataclass(frozen=True, slots=True)
class IbftMessage:
    kind: str
    key: int
    round: int
    block: Optional[int] = None

    def __post_init__(self):
        if self.kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown IBFT message kind {self.kind!r}")
        if self.key < 0 or self.round < 0:
            raise ValueError("key and round must be non-negative")


@dataclass
class IbftState:
    round: int = 0
    progress: bool = False
    locked: Optional[int] = None
    prepared: set = field(default_factory=set)          # rounds we sent Prepare in
    commit_sent: set = field(default_factory=set)       # (round, block)
    prepares: dict = field(default_factory=dict)        # (round, block) -> keys
    commits: dict = field(default_factory=dict)         # block -> keys
    round_changes: dict = field(default_factory=dict)   # target round -> keys
    pending: dict = field(default_factory=dict)         # round -> proposal not yet usable
    finalized: set = field(default_factory=set)


def ibft_proposer(round: int, params: IbftParams) -> int:
    if round < 0:
        raise ValueError("round must be >= 0")
    return params.rotation[round % params.k]


def ibft_valid(block: int, messages: Iterable, params: IbftParams) -> bool:
    """Enough distinct keys have committed to `block`."""
    keys = {m.key for m in messages if m.kind == COMMIT and m.block == block}
    return len(keys) >= params.quorum


def _votes(keys: Iterable[int], kind: str, round: int, block: Optional[int]) -> list:
    return [Broadcast(IbftMessage(kind, key, round, block)) for key in keys]


def ibft_propose(st: IbftState, keys: Iterable[int], head: int, round: int,
                 params: IbftParams, dag: BlockDag) -> list:
    """Actions for a node whose round-start proposal timer fired."""
    if st.round != round:
        return []
    key = ibft_proposer(round, params)
    if key not in keys:
        return []
    reuse = None
    if st.locked is not None and dag[st.locked].parent == head:
        reuse = st.locked
    return [Propose(key, round, head, reuse)]


def _try_proposal(st: IbftState, keys, head: int, msg: IbftMessage, dag: BlockDag) -> list:
    if msg.round > st.round or dag[msg.block].parent != head:
        st.pending[msg.round] = msg
        return []
    if msg.round < st.round:
        return []
    if st.locked is not None and st.locked != msg.block:
        return []
    st.pending.pop(msg.round, None)
    st.progress = True
    if msg.round in st.prepared:
        return []
    st.prepared.add(msg.round)
    return _votes(keys, PREPARE, msg.round, msg.block)


def _try_commit(st: IbftState, keys, head: int, round: int, block: int,
                params: IbftParams, dag: BlockDag) -> list:
    voters = st.prepares.get((round, block), ())
    if len(voters) < params.quorum or (round, block) in st.commit_sent:
        return []
    if dag[block].parent != head or block in st.finalized:
        return []
    if st.locked is not None and st.locked != block:
        return []
    st.commit_sent.add((round, block))
    st.locked = block
    st.progress = True
    return _votes(keys, COMMIT, round, block)


def _try_finalize(st: IbftState, head: int, block: int, round: int,
                  params: IbftParams, dag: BlockDag) -> list:
    if len(st.commits.get(block, ())) < params.quorum:
        return []
    if block in st.finalized or dag[block].parent != head:
        return []
    st.progress = True
    return [Finalize(block), AdvanceRound(max(st.round, round) + 1)]


def ibft_step(st: IbftState, keys, head: int, msg: IbftMessage, params: IbftParams,
              dag: BlockDag) -> list:
    """Record `msg` and return the prescribed reaction."""
    if msg.kind == PROPOSAL:
        if msg.key != ibft_proposer(msg.round, params):
            return []
        return _try_proposal(st, keys, head, msg, dag)
    if msg.kind == PREPARE:
        st.prepares.setdefault((msg.round, msg.block), set()).add(msg.key)
        return _try_commit(st, keys, head, msg.round, msg.block, params, dag)
    if msg.kind == COMMIT:
        st.commits.setdefault(msg.block, set()).add(msg.key)
        return _try_finalize(st, head, msg.block, msg.round, params, dag)
    # round change
    st.round_changes.setdefault(msg.round, set()).add(msg.key)
    if msg.round <= st.round:
        return []
    # a request for round r also supports every lower target: move to the
    # highest round that a quorum of keys asks for, at or above
    support: set = set()
    for r in sorted((r for r in st.round_changes if r > st.round), reverse=True):
        support |= st.round_changes[r]
        if len(support) >= params.quorum:
            return [AdvanceRound(r)]
    return []


def ibft_on_timeout(st: IbftState, keys, round: int) -> list:
    """Round timer fired. Empty list means: just re-arm."""
    if round != st.round:
        return []
    if st.progress:
        st.progress = False
        return []
    return _votes(keys, ROUND_CHANGE, st.round + 1, None)


def ibft_after_head_change(st: IbftState, keys, head: int, params: IbftParams,
                           dag: BlockDag) -> list:
    """Re-examine buffered proposals and quorums once the head or round moved."""
    h = dag.height(head)
    if st.locked is not None and dag.height(st.locked) <= h:
        st.locked = None
    for b in [b for b in st.commits if dag.height(b) <= h]:
        del st.commits[b]
    for rb in [rb for rb in st.prepares if dag.height(rb[1]) <= h]:
        del st.prepares[rb]
    for r in [r for r in st.round_changes if r <= st.round]:
        del st.round_changes[r]
    for r in [r for r in st.pending if r < st.round]:
        del st.pending[r]
    out: list = []
    for block, voters in sorted(st.commits.items()):
        if len(voters) >= params.quorum and dag[block].parent == head:
            return _try_finalize(st, head, block, st.round, params, dag)
    for (r, block) in sorted(st.prepares):
        if r == st.round:
            out += _try_commit(st, keys, head, r, block, params, dag)
    msg = st.pending.get(st.round)
    if msg is not None:
        out += _try_proposal(st, keys, head, msg, dag)
    return out


def messages_per_round(k: int) -> int:
    """Consensus messages in one honest round when keyed nodes flood to each other."""
    return (k - 1) + 2 * k * (k - 1)
