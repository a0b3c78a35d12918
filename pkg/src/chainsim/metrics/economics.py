"""Decentralization, fairness, voting power, PoD and griefing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from ..simnet import SystemState, ZeroTotalResource, resource_fraction
from ..strategies import (UtilityModel, block_payoffs, chain_payments, estimate_utility,
                          paired_summary)


class ZeroRewards(ValueError):
    pass


class TooManyNodes(ValueError):
    pass


class IdenticalProfiles(ValueError):
    pass


class DivisionByZero(ZeroDivisionError):
    pass


def hhi(state, i=0) -> float:
    """Sum over nodes of (100 * p_n)^2 for resource i.

    `state` is a SystemState or a sequence of raw amounts; amounts are
    normalized to fractions first.
    """
    if isinstance(state, SystemState):
        n = len(state.nodes)
        fractions = [resource_fraction(state, k, i) for k in range(n)]
    else:
        amounts = [float(a) for a in state]
        if any(a < 0 for a in amounts):
            raise ValueError("resource amounts must be non-negative")
        total = sum(amounts)
        if total <= 0:
            raise ZeroTotalResource("resource has zero total")
        fractions = [a / total for a in amounts]
    return sum((100.0 * p) ** 2 for p in fractions)


def hhi_from_shares(percentages: Iterable[float]) -> float:
    """HHI of market shares given in percent, taken as-is.

    Published concentration tables often list only the largest players, so
    the shares need not add up to 100 and must not be renormalized.
    """
    shares = [float(s) for s in percentages]
    if any(s < 0 or s > 100 for s in shares):
        raise ValueError("shares must lie in [0, 100]")
    return sum(s * s for s in shares)


def pivotality(weights: Sequence[float], threshold: float) -> list[int]:
    """Raw Banzhaf counts: coalitions where each member's defection flips the outcome."""
    n = len(weights)
    if n > 20:
        raise TooManyNodes(f"{n} nodes; exhaustive enumeration is capped at 20")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be non-negative")
    eps = 1e-12
    counts = [0] * n
    sums = [0.0] * (1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        sums[mask] = sums[mask ^ low] + weights[low.bit_length() - 1]
    for mask in range(1, 1 << n):
        if sums[mask] < threshold - eps:
            continue
        m = mask
        while m:
            low = m & -m
            j = low.bit_length() - 1
            if sums[mask ^ low] < threshold - eps:
                counts[j] += 1
            m ^= low
    return counts


@dataclass
class FairnessResult:
    shares: list
    fractions: list
    epsilons: list
    epsilon: float
    alpha: float = 0.0
    adversaries: list = field(default_factory=list)


def fairness_measure(trace, rewards: Optional[Sequence[float]] = None,
                     resource="hash", model: Optional[UtilityModel] = None) -> FairnessResult:
    """share_n = rewards_n / U_T and eps_n = max(0, 1 - share_n / p_n)."""
    if rewards is None:
        payoff = block_payoffs(trace, model or UtilityModel.from_config(trace.config))
        rewards = [payoff[i] for i in range(trace.n_nodes)]
    total = sum(rewards)
    if total == 0:
        raise ZeroRewards("no rewards were paid")
    state = trace.final_state
    fractions = [resource_fraction(state, n, resource) for n in range(len(rewards))]
    shares = [r / total for r in rewards]
    eps = [max(0.0, 1.0 - s / p) if p > 0 else 0.0 for s, p in zip(shares, fractions)]
    adversaries = [i for i, nc in enumerate(trace.config.nodes) if nc.strategy != "default"]
    alpha = sum(fractions[i] for i in adversaries)
    honest = [e for i, e in enumerate(eps) if i not in adversaries]
    return FairnessResult(shares, fractions, eps, max(honest) if honest else 0.0, alpha, adversaries)


def fairness_windows(trace, period: float, step: Optional[float] = None, resource="hash",
                     model: Optional[UtilityModel] = None) -> list[tuple[float, float]]:
    """Honest epsilon over each window [t, t + period) of block timestamps.

    Windows that pay no reward are skipped. The worst entry is the empirical
    epsilon for periods of that length.
    """
    if not period > 0:
        raise ValueError("period must be positive")
    step = period if step is None else step
    if not step > 0:
        raise ValueError("step must be positive")
    payments = chain_payments(trace, model or UtilityModel.from_config(trace.config))
    out = []
    t = 0.0
    while t + period <= trace.horizon + 1e-9:
        rewards = [0.0] * trace.n_nodes
        for blk, creator, pay in payments:
            if t <= blk.timestamp < t + period:
                rewards[creator] += pay
        if sum(rewards) > 0:
            out.append((t, fairness_measure(trace, rewards, resource).epsilon))
        t += step
    return out


@dataclass(frozen=True)
class PodResult:
    ratio: float
    positive: bool
    # True when the decentralized system does worse than the central baseline
    costly: bool


def pod(value_decentralized: float, value_centralized: float, positive: bool = False) -> PodResult:
    """Price of decentralization: U(decentralized) / U(centralized).

    For a positive measure (more is better) a ratio below 1 is the price paid;
    for a negative measure such as message counts it is a ratio above 1.
    """
    if value_centralized == 0:
        raise DivisionByZero("centralized value is zero")
    r = value_decentralized / value_centralized
    return PodResult(r, positive, r < 1 if positive else r > 1)


@dataclass
class GriefingResult:
    per_victim: dict
    network: float
    attacker_loss: float
    losses: dict


def griefing_factor(trace_d, trace_dns, n: int, model: Optional[UtilityModel] = None) -> GriefingResult:
    """Victim loss per unit of attacker loss, losses being minus the utility change."""
    if trace_d is trace_dns:
        raise IdenticalProfiles("the two traces are the same object")
    model = model or UtilityModel.from_config(trace_d.config)
    nodes = range(trace_d.n_nodes)
    losses = {m: estimate_utility(trace_d, m, model) - estimate_utility(trace_dns, m, model)
              for m in nodes}
    attacker = losses[n]
    per = {}
    for m in nodes:
        if m == n:
            continue
        per[m] = losses[m] / attacker if attacker > 0 else math.inf
    network = sum(per.values()) if attacker > 0 else math.inf
    return GriefingResult(per, network, attacker, losses)


@dataclass
class DecentralizationResult:
    holds: bool
    mean_gap: float
    stderr: float
    gaps: list


def merged_config(cfg, n: int, m: int):
    """X_nm: m's resources and keys go to n; m stays on as a resourceless relay."""
    from ..config import ConfigInvalid, from_dict
    if n == m:
        raise ConfigInvalid("cannot merge a node with itself")
    data = cfg.to_dict()
    a, b = data["nodes"][n], data["nodes"][m]
    for kind, amount in b["resources"].items():
        a["resources"][kind] = a["resources"].get(kind, 0.0) + amount
    b["resources"] = {k: 0.0 for k in b["resources"]}
    a["keys"] = sorted(set(a["keys"]) | set(b["keys"]))
    b["keys"] = []
    return from_dict(data)


def perfect_decentralization_check(scenario, n: int, m: int, model: Optional[UtilityModel] = None,
                                   seeds: Iterable[int] = range(5), horizon: Optional[float] = None,
                                   resource: str = "hash", level: float = 0.05) -> DecentralizationResult:
    """Does n do at least as well alone as its stake of the merged n+m?

    The merged node's utility is scaled by r_n / (r_n + r_m) so both sides are
    per unit of n's original resource. Fails only when the gap is
    significantly negative (one-sided paired t-test).
    """
    from ..config import ConfigInvalid
    from ..simnet import run
    if not (0 <= n < scenario.n_nodes and 0 <= m < scenario.n_nodes) or n == m:
        raise ConfigInvalid("need two distinct nodes in range")
    merged = merged_config(scenario, n, m)
    model = model or UtilityModel.from_config(scenario)
    r_n = scenario.nodes[n].resources.get(resource, 0.0)
    r_m = scenario.nodes[m].resources.get(resource, 0.0)
    if r_n + r_m <= 0:
        raise ConfigInvalid("merged node has no resource")
    share = r_n / (r_n + r_m)
    gaps = []
    for seed in seeds:
        alone = estimate_utility(run(scenario, horizon, seed), n, model)
        together = estimate_utility(run(merged, horizon, seed), n, model)
        gaps.append(alone - share * together)
    mean, se, p = paired_summary([-g for g in gaps])
    return DecentralizationResult(not (mean > 0 and p < level), -mean, se, gaps)
