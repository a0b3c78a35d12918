"""Node strategies and utility estimation.

A strategy maps (node state, triggering event) to a list of actions. The
engine computes what the protocol prescribes and hands it over in
`ctx.prescribed`; the default strategy simply returns that list.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

from .events import (BLOCK_ARRIVAL, BLOCK_MINED, Adopt, Broadcast, Decision, Event,
                     Propose, Publish, Relay)
from .protocols.ibft import COMMIT


class UnknownStrategy(ValueError):
    pass


class EmptyTrace(ValueError):
    pass


class Strategy:
    """Base strategy: follow the protocol."""

    name = "default"

    def __init__(self, **params):
        self.params = params

    def decide(self, ctx: Decision, event: Event) -> list:
        return list(ctx.prescribed)

    def filter_txs(self, txs: tuple, transactions: dict) -> tuple:
        return txs


class Default(Strategy):
    name = "default"

    def __init__(self):
        super().__init__()


def default_decide(ctx: Decision, event: Event) -> list:
    return list(ctx.prescribed)


class Withhold(Strategy):
    """Mine and vote, but never release own blocks, proposals or commits."""

    name = "withhold"

    def __init__(self):
        super().__init__()

    def decide(self, ctx, event):
        out = []
        for a in ctx.prescribed:
            if isinstance(a, (Publish, Propose)):
                continue
            if isinstance(a, Broadcast) and a.msg.kind == COMMIT:
                continue
            out.append(a)
        return out


class Censor(Strategy):
    """Follow the protocol but leave out transactions created by `targets`."""

    name = "censor"

    def __init__(self, targets: Sequence[int] = ()):
        super().__init__(targets=list(targets))
        self.targets = set(targets)

    def filter_txs(self, txs, transactions):
        return tuple(t for t in txs if transactions[t].creator not in self.targets)


class Selfish(Strategy):
    """Lead-based block withholding on a private branch.

    Heights stand in for chain lengths; `gamma` is the probability that an
    honest node hearing both sides of a tie mines on ours.
    """

    name = "selfish"

    def __init__(self, gamma: float = 0.0):
        super().__init__(gamma=gamma)
        if not 0 <= gamma <= 1:
            raise ValueError("gamma must lie in [0, 1]")
        self.gamma = gamma
        self.priv: Optional[int] = None
        self.pub: Optional[int] = None
        self.hidden: list[int] = []
        self.branch_len = 0

    def _publish(self, blocks) -> list:
        blocks = tuple(blocks)
        if not blocks:
            return []
        published = set(blocks)
        self.hidden = [b for b in self.hidden if b not in published]
        return [Publish(blocks, rush=self.gamma)]

    def decide(self, ctx, event):
        dag = ctx.dag
        if self.priv is None:
            self.priv = self.pub = dag.genesis
        if event.kind == BLOCK_MINED:
            b = event.payload["block"]
            delta_prev = dag.height(self.priv) - dag.height(self.pub)
            self.priv = b
            self.hidden.append(b)
            self.branch_len += 1
            out = [Adopt(b)]
            if delta_prev == 0 and self.branch_len == 2:
                # won the tie race: release everything
                out += self._publish(self.hidden)
                self.pub = self.priv
                self.branch_len = 0
            return out
        if event.kind != BLOCK_ARRIVAL:
            return list(ctx.prescribed)
        b = event.payload["block"]
        out = [Relay(b, event.payload.get("sender"))]
        if dag.height(b) <= dag.height(self.pub):
            return out
        delta_prev = dag.height(self.priv) - dag.height(self.pub)
        self.pub = b
        if delta_prev <= 0:
            self.priv = b
            self.hidden = []
            self.branch_len = 0
            out.insert(0, Adopt(b))
        elif delta_prev == 1:
            out += self._publish(self.hidden[-1:])
        elif delta_prev == 2:
            out += self._publish(self.hidden)
            self.pub = self.priv
            self.branch_len = 0
        else:
            h = dag.height(b)
            out += self._publish([x for x in self.hidden if dag.height(x) <= h])
        return out


STRATEGIES: dict[str, type] = {
    "default": Default,
    "withhold": Withhold,
    "censor": Censor,
    "selfish": Selfish,
}


def make_strategy(name: str, params: Optional[dict] = None) -> Strategy:
    try:
        cls = STRATEGIES[name]
    except KeyError:
        from .config import ConfigInvalid
        raise ConfigInvalid(f"unknown strategy {name!r}; known: {sorted(STRATEGIES)}") from None
    try:
        return cls(**(params or {}))
    except TypeError as e:
        from .config import ConfigInvalid
        raise ConfigInvalid(f"strategy {name!r}: {e}") from None


@dataclass
class UtilityModel:
    """u_n as a constant cost rate on processing power, u'_n as block payoffs.

    Payoffs are paid for blocks on the reference chain's finalized prefix.
    With normalize="share" block payoffs are rescaled as if difficulty had
    kept the reference chain at one block per mean interval.
    """

    cost_rate: float = 0.0
    block_reward: Optional[float] = None
    include_fees: bool = True
    own_parent_bonus: float = 0.0
    normalize: str = "absolute"
    scale: float = 1.0
    state_rate: Optional[Callable[[Any, int], float]] = None
    action_payoff: Optional[Callable[[Any, int], float]] = None

    @classmethod
    def from_config(cls, cfg) -> "UtilityModel":
        u = cfg.utility
        return cls(u.cost_rate, u.block_reward, u.include_fees, u.own_parent_bonus, u.normalize)

    def scaled(self, c: float) -> "UtilityModel":
        return UtilityModel(self.cost_rate, self.block_reward, self.include_fees,
                            self.own_parent_bonus, self.normalize, self.scale * c,
                            self.state_rate, self.action_payoff)


def _protocol_reward(cfg) -> float:
    return cfg.nakamoto.block_reward if cfg.protocol == "nakamoto" else cfg.ibft.block_reward


def chain_payments(trace, model: UtilityModel) -> list[tuple]:
    """(block, creator, payment) for each reference-chain block, genesis excluded."""
    cfg = trace.config
    reward = _protocol_reward(cfg) if model.block_reward is None else model.block_reward
    fees_on = model.include_fees and not (cfg.protocol == "nakamoto"
                                          and cfg.nakamoto.fee_policy == "fixed")
    dag = trace.dag
    out = []
    for bid in trace.reference_chain()[1:]:
        blk = dag.blocks[bid]
        if model.action_payoff is not None:
            out.append((blk, blk.creator, model.action_payoff(blk, blk.creator)))
            continue
        pay = reward
        if fees_on:
            pay += sum(trace.transactions[t].fee for t in blk.txs)
        if model.own_parent_bonus and dag.blocks[blk.parent].creator == blk.creator:
            pay += model.own_parent_bonus
        out.append((blk, blk.creator, pay))
    return out


def block_payoffs(trace, model: UtilityModel) -> dict[int, float]:
    """Per-node payoff from the reference chain, before the state-rate term."""
    cfg = trace.config
    payments = chain_payments(trace, model)
    out = {i: 0.0 for i in range(cfg.n_nodes)}
    for _blk, creator, pay in payments:
        out[creator] += pay
    if model.normalize == "share" and payments and cfg.protocol == "nakamoto":
        factor = (trace.horizon / cfg.nakamoto.mean_block_interval) / len(payments)
        out = {i: v * factor for i, v in out.items()}
    return out


def _hash_fraction(cfg, n: int) -> float:
    kinds = cfg.all_resource_kinds()
    if "hash" not in kinds:
        return 0.0
    col = kinds.index("hash")
    total = sum(cfg.resource_vector(i)[col] for i in range(cfg.n_nodes))
    return cfg.resource_vector(n)[col] / total if total > 0 else 0.0


def estimate_utility(trace, n: int, model: Optional[UtilityModel] = None) -> float:
    """Finite-horizon average utility of node n in tokens per second."""
    if trace is None or trace.horizon <= 0:
        raise EmptyTrace("utility needs a trace with positive horizon")
    model = model or UtilityModel.from_config(trace.config)
    if model.state_rate is not None:
        rate = model.state_rate(trace.final_state, n)
    else:
        rate = -model.cost_rate * _hash_fraction(trace.config, n)
    payoff = block_payoffs(trace, model)[n]
    return model.scale * (rate * trace.horizon + payoff) / trace.horizon


def all_utilities(trace, model: Optional[UtilityModel] = None) -> list[float]:
    return [estimate_utility(trace, i, model) for i in range(trace.n_nodes)]


def with_strategy(cfg, n: Optional[int], strategy: str, params: Optional[dict] = None):
    """Copy of cfg where every node follows the default except n, which runs `strategy`."""
    data = cfg.to_dict()
    for i, node in enumerate(data["nodes"]):
        if i == n:
            node["strategy"] = strategy
            node["strategy_params"] = dict(params or {})
        else:
            node["strategy"] = "default"
            node["strategy_params"] = {}
    from .config import from_dict
    return from_dict(data)


@dataclass
class IncentiveResult:
    delta: float
    compatible: bool
    stderr: float
    deltas: list = field(default_factory=list)
    p_value: float = 1.0


def paired_summary(deltas: Sequence[float]) -> tuple[float, float, float]:
    """(mean, standard error, one-sided p-value for mean > 0)."""
    from scipy import stats
    k = len(deltas)
    mean = sum(deltas) / k
    if k < 2:
        return mean, math.inf, 1.0
    var = sum((d - mean) ** 2 for d in deltas) / (k - 1)
    se = math.sqrt(var / k)
    if se == 0:
        return mean, 0.0, 0.0 if mean > 0 else 1.0
    p = float(stats.t.sf(mean / se, df=k - 1))
    return mean, se, p


def incentive_check(scenario, n: int, s, model: Optional[UtilityModel] = None,
                    seeds: Iterable[int] = range(5), horizon: Optional[float] = None,
                    level: float = 0.05) -> IncentiveResult:
    """Compare node n's utility under D and D_{n,s} on common seeds.

    delta = v(D_{n,s}) - v(D); the profile is compatible unless delta is
    significantly positive (one-sided paired t-test at `level`).
    """
    from .config import ConfigInvalid
    from .simnet import run
    if not 0 <= n < scenario.n_nodes:
        raise ConfigInvalid(f"node {n} out of range")
    name, params = (s, {}) if isinstance(s, str) else (s[0], dict(s[1]))
    base = with_strategy(scenario, None, "default")
    dev = with_strategy(scenario, n, name, params)
    model = model or UtilityModel.from_config(scenario)
    deltas = []
    for seed in seeds:
        v_d = estimate_utility(run(base, horizon, seed), n, model)
        v_s = estimate_utility(run(dev, horizon, seed), n, model)
        deltas.append(v_s - v_d)
    if not deltas:
        raise ConfigInvalid("incentive check needs at least one seed")
    mean, se, p = paired_summary(deltas)
    compatible = not (mean > 0 and p < level)
    return IncentiveResult(mean, compatible, se, deltas, p)
