import random
import statistics

import pytest

from chainsim import run, scenarios
from chainsim.chain import Block, BlockDag
from chainsim.config import IbftParams, NakamotoParams
from chainsim.events import BLOCK_ARRIVAL, BLOCK_MINED, Adopt, Decision, Event, Publish, Relay
from chainsim.metrics import audit_liveness, audit_safety
from chainsim.protocols.forkchoice import (EmptyView, final_tip, finality_k_confirmations,
                                          fork_choice_most_work)
from chainsim.protocols.ibft import (COMMIT, PREPARE, PROPOSAL, IbftMessage, IbftState,
                                     ibft_proposer, ibft_step, ibft_valid)
from chainsim.protocols.nakamoto import (Nakamoto, ZeroHashPower, nakamoto_make_block,
                                         nakamoto_next_mining_time)
from chainsim.strategies import Selfish


def five_block_dag():
    dag = BlockDag.with_genesis()
    dag.add(Block(1, 0, 1.0, 1.5)).add(Block(2, 1, 2.0, 1.5))
    dag.add(Block(3, 0, 1.0, 0.9)).add(Block(4, 3, 2.0, 0.9)).add(Block(5, 4, 3.0, 0.9))
    return dag


# -- fork choice --

def test_fork_choice_genesis_only():
    assert fork_choice_most_work({0}, BlockDag.with_genesis()) == 0


def test_fork_choice_empty_view():
    with pytest.raises(EmptyView):
        fork_choice_most_work(set(), BlockDag.with_genesis())


def test_fork_choice_heavier_tip():
    dag = five_block_dag()
    assert fork_choice_most_work(set(dag), dag) == 2


def test_fork_choice_first_seen_tie():
    dag = BlockDag.with_genesis()
    dag.add(Block(1, 0, 1.0, 1.0)).add(Block(2, 0, 1.0, 1.0))
    assert fork_choice_most_work({0, 1, 2}, dag, seen_order=[0, 2, 1]) == 2
    assert fork_choice_most_work({0, 1, 2}, dag, seen_order=[0, 1, 2]) == 1


def test_uniform_tiebreak_needs_rng_and_uses_it():
    dag = BlockDag.with_genesis()
    dag.add(Block(1, 0, 1.0, 1.0)).add(Block(2, 0, 1.0, 1.0))
    with pytest.raises(ValueError):
        fork_choice_most_work({1, 2}, dag, tiebreak="uniform")
    picks = {fork_choice_most_work({1, 2}, dag, "uniform", rng=random.Random(s)) for s in range(40)}
    assert picks == {1, 2}


def test_k_confirmations_depth():
    dag = BlockDag.with_genesis()
    for i in range(1, 8):
        dag.add(Block(i, i - 1, float(i), 1.0))
    assert finality_k_confirmations({7}, dag, 6) == {0, 1}
    assert finality_k_confirmations({3}, dag, 6) == set()
    assert finality_k_confirmations({3}, dag, 1) == {0, 1, 2}
    assert final_tip(dag, 7, 6) == 1
    assert final_tip(dag, 3, 6) is None


# -- IBFT --

def test_ibft_quorum_validity():
    p = IbftParams(k=4)
    assert p.quorum == 3
    msgs = [IbftMessage(COMMIT, k, 0, 9) for k in (0, 1, 2)]
    assert ibft_valid(9, msgs, p)
    assert not ibft_valid(9, msgs[:2], p)
    assert not ibft_valid(9, [IbftMessage(COMMIT, 0, 0, 9), IbftMessage(COMMIT, 0, 0, 9),
                              IbftMessage(COMMIT, 1, 0, 9)], p)


def test_ibft_proposer_rotation():
    p = IbftParams(k=4)
    assert ibft_proposer(0, p) == 0
    assert ibft_proposer(4, p) == 0
    assert ibft_proposer(6, p) == 2


def test_valid_proposal_gets_prepare():
    dag = BlockDag.with_genesis()
    dag.add(Block(1, 0, 1.0, 1.0, creator=0))
    st = IbftState()
    out = ibft_step(st, [2], 0, IbftMessage(PROPOSAL, 0, 0, 1), IbftParams(k=4), dag)
    assert [(a.msg.kind, a.msg.key, a.msg.block) for a in out] == [(PREPARE, 2, 1)]


def test_proposal_from_wrong_key_ignored():
    dag = BlockDag.with_genesis()
    dag.add(Block(1, 0, 1.0, 1.0, creator=1))
    assert ibft_step(IbftState(), [2], 0, IbftMessage(PROPOSAL, 1, 0, 1), IbftParams(k=4), dag) == []


def _round_changes(trace):
    return sum(c for _t, _n, kind, _b, _r, c in trace.sends() if kind == "round_change")


def test_honest_zero_latency_one_block_per_round():
    trace = run(scenarios.ibft(k=4, latency=0.0, horizon=20.0), seed=0)
    chain = trace.reference_chain()[1:]
    rounds = [trace.dag[b].payload["round"] for b in chain]
    assert rounds == list(range(len(chain)))
    assert len(chain) >= 10
    assert _round_changes(trace) == 0


def test_crashed_proposer_skipped_by_round_change():
    trace = run(scenarios.ibft(k=4, crashed=(1,), horizon=40.0), seed=0)
    rounds = [trace.dag[b].payload["round"] for b in trace.reference_chain()[1:]]
    assert 1 not in rounds and 2 in rounds
    assert _round_changes(trace) > 0
    assert audit_safety(trace) == []


def test_even_split_halts_without_safety_loss():
    groups = {"partitions": [{"start": 0.5, "end": 1000.0, "groups": [[0, 1], [2, 3]]}]}
    trace = run(scenarios.ibft(k=4, horizon=200.0, **groups), seed=0)
    assert audit_safety(trace) == []
    stalls = [f for f in audit_liveness(trace, 20.0) if f.kind == "stall"]
    assert stalls and stalls[-1].end == 200.0


def test_two_silent_keys_halt():
    trace = run(scenarios.ibft(k=4, horizon=100.0, strategies={0: "withhold", 1: "withhold"}),
                seed=0)
    assert len(trace.reference_chain()) == 1


def test_one_silent_key_still_finalizes():
    trace = run(scenarios.ibft(k=4, horizon=100.0, strategies={1: "withhold"}), seed=0)
    assert len(trace.reference_chain()) > 10


# -- Nakamoto --

def test_mining_time_mean_solo():
    rng = random.Random(0)
    p = NakamotoParams(mean_block_interval=600.0)
    draws = [nakamoto_next_mining_time(0.0, 1.0, p, rng) for _ in range(20_000)]
    sigma = 600.0 / len(draws) ** 0.5
    assert abs(statistics.fmean(draws) - 600.0) < 3 * sigma


def test_mining_time_zero_power():
    with pytest.raises(ZeroHashPower):
        nakamoto_next_mining_time(0.0, 0.0, NakamotoParams(), random.Random(0))


def test_two_miner_race_share():
    trace = run(scenarios.nakamoto([0.75, 0.25], mean_block_interval=1.0, horizon=10_000.0), seed=5)
    blocks = [trace.dag[b] for b in trace.dag if b != 0]
    share = sum(1 for b in blocks if b.creator == 0) / len(blocks)
    sigma = (0.75 * 0.25 / len(blocks)) ** 0.5
    assert abs(share - 0.75) < 3 * sigma


def test_make_block_greedy_fees():
    p = NakamotoParams(max_txs_per_block=3)
    assert nakamoto_make_block(1, 0, 1.0, 0, {}, p).txs == ()
    mempool = {10: 9.0, 11: 7.0, 12: 5.0, 13: 3.0, 14: 1.0}
    b = nakamoto_make_block(1, 0, 1.0, 0, mempool, p)
    assert sorted(mempool[t] for t in b.txs) == [5.0, 7.0, 9.0]
    assert b.parent == 0


def test_honest_miner_publishes_immediately():
    dag = BlockDag.with_genesis()
    dag.add(Block(1, 0, 1.0, 1.0, creator=0))
    ev = Event(1.0, 0, BLOCK_MINED, 0, {"block": 1})
    out = Nakamoto(NakamotoParams()).prescribe(dag, 0, ev, random.Random(0))
    assert out == [Adopt(1), Publish((1,))]


def test_honest_arrival_relays_and_adopts():
    dag = BlockDag.with_genesis()
    dag.add(Block(1, 0, 1.0, 1.0, creator=1))
    ev = Event(1.0, 0, BLOCK_ARRIVAL, 0, {"block": 1, "sender": 1})
    out = Nakamoto(NakamotoParams()).prescribe(dag, 0, ev, random.Random(0))
    assert out == [Adopt(1), Relay(1, 1)]


# -- selfish mining transitions --

class SelfishHarness:
    def __init__(self):
        self.dag = BlockDag.with_genesis()
        self.s = Selfish(gamma=0.0)
        self.next_id = 1
        self.private_tip = 0
        self.public_tip = 0

    def _event(self, kind, b):
        payload = {"block": b, "sender": 1}
        return Event(float(b), b, kind, 0, payload)

    def mine(self):
        b = self.next_id
        self.next_id += 1
        self.dag.add(Block(b, self.private_tip, float(b), 1.0, creator=0))
        self.private_tip = b
        ev = self._event(BLOCK_MINED, b)
        return b, self.s.decide(Decision(0, ev, [], self.dag), ev)

    def honest(self):
        b = self.next_id
        self.next_id += 1
        self.dag.add(Block(b, self.public_tip, float(b), 1.0, creator=1))
        self.public_tip = b
        ev = self._event(BLOCK_ARRIVAL, b)
        return b, self.s.decide(Decision(0, ev, [], self.dag), ev)


def published(actions):
    return [blk for a in actions if isinstance(a, Publish) for blk in a.blocks]


def test_selfish_withholds_first_block():
    h = SelfishHarness()
    b1, out = h.mine()
    assert published(out) == []
    assert h.s.hidden == [b1]


def test_selfish_lead_one_matches_honest_block():
    h = SelfishHarness()
    b1, _ = h.mine()
    _, out = h.honest()
    assert published(out) == [b1]


def test_selfish_lead_two_overrides():
    h = SelfishHarness()
    b1, _ = h.mine()
    b2, _ = h.mine()
    _, out = h.honest()
    assert published(out) == [b1, b2]
    assert h.s.hidden == []
