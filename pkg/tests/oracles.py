"""Independent reference values used by the tests.

Nothing here imports chainsim; each oracle is computed from first principles
so that agreement with the simulator means something.
"""

from __future__ import annotations

import itertools

import numpy as np


def selfish_revenue_closed_form(alpha: float, gamma: float = 0.0) -> float:
    """Eyal-Sirer relative revenue of a selfish pool with power alpha."""
    a, g = alpha, gamma
    num = a * (1 - a) ** 2 * (4 * a + g * (1 - 2 * a)) - a ** 3
    den = 1 - a * (1 + (2 - a) * a)
    return num / den


def selfish_revenue_markov(alpha: float, gamma: float = 0.0, lead_cap: int = 200) -> float:
    """Relative revenue from the stationary law of the lead chain, solved numerically.

    States: 0 (no lead), tie (0'), and private leads 1..lead_cap. Each
    transition carries the blocks it settles for the pool and for the
    honest miners; revenue is the ratio of expected settled blocks per step.
    """
    a, h = alpha, 1.0 - alpha
    TIE = lead_cap + 1
    n = lead_cap + 2
    P = np.zeros((n, n))
    pool = np.zeros(n)      # expected pool blocks settled per step, by state
    honest = np.zeros(n)

    P[0, 1] += a
    P[0, 0] += h
    honest[0] += h
    P[1, 2] += a
    P[1, TIE] += h
    P[TIE, 0] = 1.0
    pool[TIE] += a * 2 + h * gamma * 1
    honest[TIE] += h * gamma * 1 + h * (1 - gamma) * 2
    P[2, 3] += a
    P[2, 0] += h
    pool[2] += h * 2
    for k in range(3, lead_cap + 1):
        P[k, min(k + 1, lead_cap)] += a
        P[k, k - 1] += h
        pool[k] += h * 1

    # stationary distribution: pi P = pi, sum pi = 1
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    r_pool = float(pi @ pool)
    r_honest = float(pi @ honest)
    return r_pool / (r_pool + r_honest)


def banzhaf_by_enumeration(weights, threshold) -> list[int]:
    """Raw pivot counts by listing every coalition explicitly."""
    n = len(weights)
    counts = [0] * n
    for size in range(1, n + 1):
        for coalition in itertools.combinations(range(n), size):
            total = sum(weights[i] for i in coalition)
            if total < threshold - 1e-12:
                continue
            for i in coalition:
                if total - weights[i] < threshold - 1e-12:
                    counts[i] += 1
    return counts


def ibft_messages_per_round(k: int) -> int:
    """Proposal to k-1 peers, then every key floods a prepare and a commit to k-1 peers."""
    return (k - 1) + k * (k - 1) + k * (k - 1)
