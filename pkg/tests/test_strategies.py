import math

import pytest

from chainsim import run, scenarios
from chainsim.config import ConfigInvalid
from chainsim.strategies import (Censor, EmptyTrace, UtilityModel, estimate_utility,
                                 incentive_check, make_strategy)


def test_unknown_strategy():
    with pytest.raises(ConfigInvalid):
        make_strategy("nope")
    with pytest.raises(ConfigInvalid):
        make_strategy("selfish", {"bogus": 1})


def test_withholder_slows_the_chain():
    cfg = scenarios.nakamoto([0.7, 0.3], mean_block_interval=1.0, horizon=20_000.0,
                             strategies={1: "withhold"})
    trace = run(cfg, seed=2)
    chain = trace.reference_chain()
    expected = 0.7 * 20_000
    assert abs(len(chain) - expected) < 3 * math.sqrt(expected) + 7
    assert all(trace.dag[b].creator == 0 for b in chain[1:])


def test_censor_keeps_target_transactions_out():
    cfg = scenarios.nakamoto([1.0, 0.0], mean_block_interval=1.0, horizon=300.0, tx_rate=0.5,
                             strategies={0: ("censor", {"targets": [1]})})
    trace = run(cfg, seed=0)
    included = {tx for b in trace.dag if b != 0 for tx in trace.dag[b].txs}
    by_target = {t.id for t in trace.transactions.values() if t.creator == 1}
    assert by_target and not (included & by_target)
    assert included
    assert isinstance(make_strategy("censor", {"targets": [1]}), Censor)


def test_solo_miner_utility_rate():
    cfg = scenarios.nakamoto([1.0], mean_block_interval=600.0, horizon=600.0 * 5000)
    u = estimate_utility(run(cfg, seed=4), 0)
    blocks = 5000
    assert abs(u - 1 / 600) < 3 * math.sqrt(blocks) / (600.0 * 5000) + 6 / (600.0 * 5000)


def test_zero_model_gives_zero():
    trace = run(scenarios.nakamoto([1.0, 1.0], mean_block_interval=5.0, horizon=500.0), seed=0)
    model = UtilityModel(block_reward=0.0, include_fees=False)
    assert estimate_utility(trace, 0, model) == 0.0


def test_cost_without_blocks():
    cfg = scenarios.nakamoto([1.0, 1.0], mean_block_interval=5.0, horizon=500.0,
                             strategies={1: "withhold"})
    trace = run(cfg, seed=0)
    assert estimate_utility(trace, 1, UtilityModel(cost_rate=2.0)) == pytest.approx(-2.0 * 0.5)


def test_empty_trace():
    trace = run(scenarios.nakamoto([1.0]), 0.0, 0)
    with pytest.raises(EmptyTrace):
        estimate_utility(trace, 0)


def test_utility_is_linear_in_the_model():
    trace = run(scenarios.nakamoto([2.0, 1.0], mean_block_interval=5.0, horizon=800.0,
                                   tx_rate=0.3), seed=1)
    model = UtilityModel(cost_rate=0.1, own_parent_bonus=0.5)
    for c in (0.5, 3.0, 10.0):
        assert estimate_utility(trace, 0, model.scaled(c)) == pytest.approx(
            c * estimate_utility(trace, 0, model), rel=1e-12)


def test_default_against_default_is_exactly_zero():
    cfg = scenarios.nakamoto([1.0, 1.0], mean_block_interval=5.0, horizon=500.0)
    res = incentive_check(cfg, 0, "default", seeds=range(3))
    assert res.deltas == [0.0, 0.0, 0.0]
    assert res.compatible


def test_selfish_direction_of_deviation():
    low = incentive_check(scenarios.selfish(0.1, blocks=5_000), 0, ("selfish", {"gamma": 0.0}),
                          seeds=range(3))
    high = incentive_check(scenarios.selfish(0.4, blocks=5_000), 0, ("selfish", {"gamma": 0.0}),
                           seeds=range(3))
    assert low.delta < 0 and low.compatible
    assert high.delta > 0


def test_selfish_gamma_helps_the_attacker():
    def share(gamma):
        trace = run(scenarios.selfish(0.3, gamma, blocks=20_000), seed=3)
        chain = trace.reference_chain()[1:]
        return sum(1 for b in chain if trace.dag[b].creator == 0) / len(chain)
    assert share(1.0) > share(0.0) + 0.03
