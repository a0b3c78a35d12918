import random

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from chainsim import run, scenarios
from chainsim.chain import Block, BlockDag
from chainsim.metrics import (STRONG, WEAK, HOLDS, audit_safety, hhi, persistence_verdict,
                              pivotality, pod, throughput)
from chainsim.protocols.forkchoice import fork_choice_most_work
from chainsim.strategies import UtilityModel, estimate_utility
from randconf import random_config

quick = settings(max_examples=150, deadline=None, database=None,
                 suppress_health_check=list(HealthCheck))
slow = settings(max_examples=25, deadline=None, database=None,
                suppress_health_check=list(HealthCheck))

trees = st.lists(st.tuples(st.integers(0, 1000), st.integers(1, 8)), min_size=1, max_size=30)


def build(tree, scale=1.0):
    dag = BlockDag.with_genesis()
    for i, (p, w) in enumerate(tree, start=1):
        dag.add(Block(i, p % i, float(i), w * scale))
    return dag


@quick
@given(trees, st.sampled_from([0.25, 0.5, 2.0, 8.0]), st.randoms(use_true_random=False))
def test_fork_choice_ignores_work_scale(tree, c, rnd):
    view = [0] + rnd.sample(range(1, len(tree) + 1), rnd.randint(0, len(tree)))
    order = sorted(view, key=lambda b: rnd.random())
    head = fork_choice_most_work(view, build(tree), seen_order=order)
    assert head in view
    assert fork_choice_most_work(view, build(tree, c), seen_order=order) == head


@quick
@given(st.lists(st.floats(0.01, 1e6), min_size=1, max_size=25), st.floats(1e-3, 1e3))
def test_hhi_scale_invariant_and_bounded(xs, c):
    h = hhi(xs)
    assert 10000 / len(xs) - 1e-6 <= h <= 10000 + 1e-6
    assert hhi([x * c for x in xs]) == pytest.approx(h, rel=1e-9)


@quick
@given(st.lists(st.integers(1, 50), min_size=1, max_size=8), st.floats(0.3, 0.9),
       st.randoms(use_true_random=False))
def test_pivotality_permutation_equivariant(w, q, rnd):
    perm = list(range(len(w)))
    rnd.shuffle(perm)
    base = pivotality(w, q)
    moved = pivotality([w[i] for i in perm], q)
    assert moved == [base[i] for i in perm]
    assert all(0 <= c <= 2 ** (len(w) - 1) for c in base)


@quick
@given(st.floats(1e-6, 1e9))
def test_pod_of_equal_values_is_one(x):
    assert pod(x, x).ratio == 1.0


@pytest.fixture(scope="module")
def mixed_trace():
    return run(scenarios.nakamoto([2.0, 1.0, 1.0], mean_block_interval=5.0, latency=1.0,
                                  horizon=600.0, tx_rate=0.3), seed=7)


@quick
@given(st.floats(0.01, 100.0), st.floats(0.0, 1.0), st.floats(0.0, 2.0))
def test_utility_linear_in_model(mixed_trace, c, cost, bonus):
    model = UtilityModel(cost_rate=cost, own_parent_bonus=bonus)
    for n in range(3):
        assert estimate_utility(mixed_trace, n, model.scaled(c)) == pytest.approx(
            c * estimate_utility(mixed_trace, n, model), rel=1e-9, abs=1e-12)


@quick
@given(st.lists(st.tuples(st.floats(0, 1000), st.integers(0, 1)), min_size=1, max_size=40),
       st.floats(0, 500))
def test_strong_persistence_implies_weak(raw, warmup):
    samples = sorted(raw)
    if samples[0][0] > 0:
        samples.insert(0, (0.0, samples[0][1]))
    if persistence_verdict(samples, 1000.0, warmup, STRONG) == HOLDS:
        assert persistence_verdict(samples, 1000.0, warmup, WEAK) == HOLDS


@slow
@given(st.integers(1, 20), st.integers(0, 2 ** 16))
def test_throughput_bounded_by_capacity(cap, seed):
    cfg = scenarios.nakamoto([1.0, 1.0], mean_block_interval=5.0, latency=0.5, horizon=300.0,
                             max_txs_per_block=cap, tx_rate=2.0)
    trace = run(cfg, seed=seed)
    blocks = len(trace.reference_chain()) - 1
    assert throughput(trace) <= cap * blocks / trace.horizon + 1e-12


@slow
@given(st.integers(0, 2 ** 32))
def test_random_ibft_with_at_most_f_faults_is_safe(seed):
    rng = random.Random(seed)
    cfg = random_config(rng)
    while cfg.protocol != "ibft":
        cfg = random_config(rng)
    assert audit_safety(run(cfg, seed=seed)) == []
