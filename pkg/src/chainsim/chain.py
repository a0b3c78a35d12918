"""Blocks, the block DAG and chain/ancestry queries.

The DAG holds every block any node has created (the union of all views);
which node knows which block is tracked by the simulator, not here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

GENESIS = 0


class ChainError(Exception):
    pass


class DuplicateId(ChainError):
    pass


class MissingParent(ChainError):
    pass


class UnknownBlock(ChainError, KeyError):
    pass


@dataclass(frozen=True, slots=True)
class Transaction:
    id: int
    created_at: float
    fee: float
    creator: int

    def __post_init__(self):
        if self.created_at < 0:
            raise ValueError("created_at must be >= 0")
        if self.fee < 0:
            raise ValueError("fee must be >= 0")


@dataclass(frozen=True, slots=True)
class Block:
    id: int
    parent: Optional[int]
    timestamp: float
    work: float
    txs: tuple[int, ...] = ()
    creator: int = -1
    # protocol data, e.g. the proposer key / round of an IBFT block
    payload: Any = None

    @property
    def is_genesis(self) -> bool:
        return self.parent is None


def genesis_block() -> Block:
    return Block(id=GENESIS, parent=None, timestamp=0.0, work=0.0)


@dataclass
class BlockDag:
    """Append-only block graph with cached heights and cumulative work."""

    blocks: dict[int, Block] = field(default_factory=dict)
    genesis: int = GENESIS
    _height: dict[int, int] = field(default_factory=dict, repr=False)
    _work: dict[int, float] = field(default_factory=dict, repr=False)

    @classmethod
    def with_genesis(cls) -> "BlockDag":
        dag = cls()
        dag.add(genesis_block())
        return dag

    def add(self, b: Block) -> "BlockDag":
        if b.id in self.blocks:
            raise DuplicateId(b.id)
        if b.parent is None:
            if self.blocks:
                raise MissingParent(f"block {b.id} has no parent but the DAG already has a genesis")
            if b.work != 0:
                raise ValueError("genesis carries zero work")
            self.genesis = b.id
            self.blocks[b.id] = b
            self._height[b.id] = 0
            self._work[b.id] = 0.0
            return self
        if b.parent not in self.blocks:
            raise MissingParent(f"block {b.id} points to unknown parent {b.parent}")
        if not b.work > 0:
            raise ValueError(f"mined block {b.id} needs positive work")
        self.blocks[b.id] = b
        self._height[b.id] = self._height[b.parent] + 1
        self._work[b.id] = self._work[b.parent] + b.work
        return self

    def __contains__(self, bid: object) -> bool:
        return bid in self.blocks

    def __getitem__(self, bid: int) -> Block:
        try:
            return self.blocks[bid]
        except KeyError:
            raise UnknownBlock(bid) from None

    def __len__(self) -> int:
        return len(self.blocks)

    def __iter__(self) -> Iterator[int]:
        return iter(self.blocks)

    def _check(self, *ids: int) -> None:
        for b in ids:
            if b not in self.blocks:
                raise UnknownBlock(b)

    def parent(self, b: int) -> Optional[int]:
        return self[b].parent

    def height(self, b: int) -> int:
        self._check(b)
        return self._height[b]

    def cumulative_work(self, b: int) -> float:
        self._check(b)
        return self._work[b]

    def ancestor_at(self, b: int, height: int) -> int:
        """The block at `height` on chain_of(b)."""
        self._check(b)
        h = self._height[b]
        if height < 0 or height > h:
            raise ValueError(f"height {height} not on chain of {b} (height {h})")
        blocks = self.blocks
        while h > height:
            b = blocks[b].parent
            h -= 1
        return b

    def walk(self, b: int) -> Iterator[int]:
        """Yield b, P(b), P²(b), ... down to genesis."""
        self._check(b)
        blocks = self.blocks
        cur: Optional[int] = b
        while cur is not None:
            yield cur
            cur = blocks[cur].parent

    def chain_of(self, b: int) -> tuple[int, ...]:
        return tuple(self.walk(b))

    def is_ancestor(self, a: int, b: int) -> bool:
        """True iff a is on chain_of(b); reflexive."""
        self._check(a, b)
        ha, hb = self._height[a], self._height[b]
        if ha > hb:
            return False
        return self.ancestor_at(b, ha) == a

    def incompatible(self, a: int, b: int) -> bool:
        return not self.is_ancestor(a, b) and not self.is_ancestor(b, a)

    def common_prefix(self, a: int, b: int) -> int:
        """Deepest block contained in both chain_of(a) and chain_of(b)."""
        self._check(a, b)
        ha, hb = self._height[a], self._height[b]
        if ha > hb:
            a = self.ancestor_at(a, hb)
        elif hb > ha:
            b = self.ancestor_at(b, ha)
        blocks = self.blocks
        while a != b:
            a = blocks[a].parent
            b = blocks[b].parent
        return a

    def branch(self, tip: int, base: int) -> list[int]:
        """Blocks on chain_of(tip) strictly above `base`, lowest first.

        `base` must be an ancestor of `tip`.
        """
        out = []
        hb = self.height(base)
        cur = tip
        blocks = self.blocks
        while self._height[cur] > hb:
            out.append(cur)
            cur = blocks[cur].parent
        if cur != base:
            raise ValueError(f"{base} is not an ancestor of {tip}")
        out.reverse()
        return out


# Functional forms of the DAG operations.

def add_block(dag: BlockDag, b: Block) -> BlockDag:
    return dag.add(b)


def chain_of(dag: BlockDag, b: int) -> tuple[int, ...]:
    return dag.chain_of(b)


def is_ancestor(dag: BlockDag, a: int, b: int) -> bool:
    return dag.is_ancestor(a, b)


def incompatible(dag: BlockDag, a: int, b: int) -> bool:
    return dag.incompatible(a, b)


def cumulative_work(dag: BlockDag, b: int) -> float:
    return dag.cumulative_work(b)


def common_prefix(dag: BlockDag, a: int, b: int) -> int:
    return dag.common_prefix(a, b)
