"""Proof-of-work: memoryless mining, greedy block assembly, most-work heads."""

from __future__ import annotations

import math
import random
from typing import Mapping

from ..chain import Block, BlockDag
from ..config import NakamotoParams
from ..events import (BLOCK_ARRIVAL, BLOCK_MINED, Adopt, Event, Publish, Relay)
from .forkchoice import FIRST_SEEN, KConfirmations, MostWork, prefer


class ZeroHashPower(ValueError):
    pass


def exponential(rng: random.Random, mean: float) -> float:
    # inverse transform on random() so the draw sequence is pinned to MT19937 output
    return -mean * math.log1p(-rng.random())


def nakamoto_next_mining_time(now: float, hash_fraction: float, params: NakamotoParams,
                              rng: random.Random) -> float:
    if hash_fraction <= 0:
        raise ZeroHashPower("node has no processing power")
    return now + exponential(rng, params.mean_block_interval / hash_fraction)


def select_txs(mempool: Mapping[int, float], capacity: int) -> tuple[int, ...]:
    """Highest fees first; equal fees go to the older (smaller) id."""
    if capacity <= 0 or not mempool:
        return ()
    ranked = sorted(mempool.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(tx for tx, _ in ranked[:capacity])


def nakamoto_make_block(block_id: int, parent: int, now: float, creator: int,
                        mempool: Mapping[int, float], params: NakamotoParams) -> Block:
    return Block(id=block_id, parent=parent, timestamp=now, work=params.work_per_block,
                 txs=select_txs(mempool, params.max_txs_per_block), creator=creator)


def block_reward(block: Block, fees: Mapping[int, float], params: NakamotoParams) -> float:
    """Reward plus fees; under the fixed policy fees are ignored."""
    if params.fee_policy == "fixed":
        return params.block_reward
    return params.block_reward + sum(fees.get(tx, 0.0) for tx in block.txs)


class Nakamoto:
    """Prescribed behavior of an honest proof-of-work node."""

    name = "nakamoto"

    def __init__(self, params: NakamotoParams):
        self.params = params
        self.rule = MostWork(params.tiebreak)
        self.finality = KConfirmations(params.confirmations)

    def prescribe(self, dag: BlockDag, head: int, event: Event, rng: random.Random) -> list:
        if event.kind == BLOCK_MINED:
            b = event.payload["block"]
            return [Adopt(prefer(dag, head, b, self.rule, rng)), Publish((b,))]
        if event.kind == BLOCK_ARRIVAL:
            b = event.payload["block"]
            new = prefer(dag, head, b, self.rule, rng)
            rush = event.payload.get("rush", 0.0)
            if new == head and rush > 0 and b != head \
                    and dag.cumulative_work(b) == dag.cumulative_work(head):
                # the attacker's block reached us first with probability gamma
                if rng.random() < rush:
                    new = b
            return [Adopt(new), Relay(b, event.payload.get("sender"))]
        return []
