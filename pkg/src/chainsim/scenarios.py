"""Ready-made scenario configs used by the tests, the CLI and the examples."""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

from .config import ScenarioConfig, from_dict

BITCOIN_TOP10 = (20.1, 14.5, 13.1, 8.8, 8.8, 8.3, 6.1, 4.9, 1.7, 1.4)
ETHEREUM_TOP10 = (26.5, 24.5, 11.8, 11.2, 5.4, 2.3, 1.7, 1.7, 1.3, 1.2)


def golden_fork() -> ScenarioConfig:
    """Three miners on a line; a partition keeps a stale branch alive until 710.

    Nodes are named "1", "2", "3". B3 (id 3) is the short-lived branch that
    nodes 2 and 3 drop at 702 and 710.
    """
    return from_dict({
        "name": "golden-fork",
        "protocol": "nakamoto",
        "nakamoto": {"mining": "scripted", "tiebreak": "first_seen", "confirmations": 6},
        "nodes": [{"name": "1"}, {"name": "2"}, {"name": "3"}],
        "topology": {
            "kind": "line",
            "latency": {"model": "deterministic", "mean": 10.0},
            "edge_latency": [
                {"edge": [0, 1], "latency": {"model": "deterministic", "mean": 12.0}},
                {"edge": [1, 2], "latency": {"model": "deterministic", "mean": 8.0}},
            ],
        },
        "partitions": [{"start": 250.0, "end": 700.5, "edges": [[1, 2]]}],
        "script": [
            {"t": 100.0, "action": "mine", "node": 0, "label": "B1"},
            {"t": 200.0, "action": "mine", "node": 1, "label": "B2"},
            {"t": 235.0, "action": "mine", "node": 2, "label": "B3"},
            {"t": 241.0, "action": "mine", "node": 0, "label": "B4"},
            {"t": 690.0, "action": "mine", "node": 0, "label": "B5"},
        ],
        "snapshot_times": [700.0],
        "horizon": 800.0,
    })


def double_spend(confirmations: int = 6) -> ScenarioConfig:
    """A withholding miner releases a longer private chain and rewrites 7 blocks.

    The victim's first block was 6 deep when the release lands, so exactly
    one block it held final gets overturned.
    """
    script = [{"t": 10.0 * i, "action": "mine", "node": 0, "label": f"B{i}"} for i in range(1, 8)]
    parent = "genesis"
    for i in range(1, 9):
        script.append({"t": 10.0 * i + 2.0, "action": "mine", "node": 1,
                       "label": f"A{i}", "parent": parent})
        parent = f"A{i}"
    script.append({"t": 90.0, "action": "publish", "node": 1,
                   "blocks": [f"A{i}" for i in range(1, 9)]})
    return from_dict({
        "name": "double-spend",
        "protocol": "nakamoto",
        "nakamoto": {"mining": "scripted", "confirmations": confirmations},
        "nodes": [{"name": "victim"}, {"name": "attacker", "strategy": "withhold"}],
        "topology": {"kind": "line", "latency": {"model": "deterministic", "mean": 1.0}},
        "script": script,
        "horizon": 120.0,
    })


def nakamoto(hash_power: Sequence[float], mean_block_interval: float = 600.0,
             latency: float = 0.0, horizon: float = 3600.0, strategies: Optional[dict] = None,
             topology: str = "full", tiebreak: str = "first_seen", latency_model="deterministic",
             confirmations: int = 6, max_txs_per_block: int = 1000, tx_rate: float = 0.0,
             initial_txs: int = 0, utility: Optional[dict] = None, **extra) -> ScenarioConfig:
    strategies = strategies or {}
    nodes = []
    for i, h in enumerate(hash_power):
        node = {"resources": {"hash": h}}
        if i in strategies:
            name, params = strategies[i] if isinstance(strategies[i], tuple) else (strategies[i], {})
            node["strategy"] = name
            node["strategy_params"] = params
        nodes.append(node)
    data = {
        "protocol": "nakamoto",
        "nakamoto": {"mean_block_interval": mean_block_interval, "tiebreak": tiebreak,
                     "confirmations": confirmations, "max_txs_per_block": max_txs_per_block},
        "nodes": nodes,
        "topology": {"kind": topology, "latency": {"model": latency_model, "mean": latency}},
        "workload": {"tx_rate": tx_rate, "initial_txs": initial_txs},
        "horizon": horizon,
    }
    if utility:
        data["utility"] = utility
    data.update(extra)
    return from_dict(data)


def selfish(alpha: float, gamma: float = 0.0, blocks: int = 10_000,
            normalize: str = "share") -> ScenarioConfig:
    """Attacker (node 0) with power alpha against one honest miner, no latency."""
    return nakamoto([alpha, 1.0 - alpha], mean_block_interval=1.0, latency=0.0,
                    horizon=float(blocks), strategies={0: ("selfish", {"gamma": gamma})},
                    topology="full", confirmations=6, utility={"normalize": normalize})


def ibft(k: int = 4, observers: int = 0, crashed: Iterable[int] = (), latency: float = 1.0,
         round_timeout: Optional[float] = None, block_period: float = 1.0,
         horizon: float = 200.0, strategies: Optional[dict] = None,
         latency_model: str = "deterministic", tx_rate: float = 0.0, **extra) -> ScenarioConfig:
    """k validators (node i holds key i) plus non-voting observers on a full mesh.

    The default timeout block_period + 2 * latency makes a round with a silent
    proposer last exactly as long as a normal one under fixed latency.
    """
    crashed = set(crashed)
    strategies = strategies or {}
    if round_timeout is None:
        round_timeout = block_period + 2.0 * latency if latency > 0 else block_period + 1.0
    nodes = []
    for i in range(k):
        node = {"keys": [i], "crashed": i in crashed}
        if i in strategies:
            node["strategy"] = strategies[i]
        nodes.append(node)
    nodes += [{} for _ in range(observers)]
    data = {
        "protocol": "ibft",
        "ibft": {"k": k, "round_timeout": round_timeout, "block_period": block_period},
        "resource_kinds": ["hash"],
        "nodes": nodes,
        "topology": {"kind": "full", "latency": {"model": latency_model, "mean": latency}},
        "workload": {"tx_rate": tx_rate},
        "horizon": horizon,
        "observer": min(i for i in range(k) if i not in crashed) if len(crashed) < k else 0,
    }
    data.update(extra)
    return from_dict(data)


def central(n: int = 10, mean_block_interval: float = 1.0, horizon: float = 100.0) -> ScenarioConfig:
    """One producer at the center of a star; everyone else just listens."""
    return from_dict({
        "name": f"central-{n}",
        "protocol": "nakamoto",
        "nakamoto": {"mean_block_interval": mean_block_interval, "confirmations": 1},
        "nodes": [{"resources": {"hash": 1.0 if i == 0 else 0.0}} for i in range(n)],
        "topology": {"kind": "star", "center": 0, "latency": {"model": "deterministic", "mean": 0.1}},
        "horizon": horizon,
    })
