"""Random small scenarios for determinism and invariant checks."""

from __future__ import annotations

import random

from chainsim.config import from_dict


def random_config(rng: random.Random):
    protocol = rng.choice(["nakamoto", "nakamoto", "ibft"])
    latency = {"model": rng.choice(["deterministic", "exponential"]),
               "mean": rng.choice([0.0, 0.1, 0.5, 2.0])}
    if protocol == "ibft" and latency["mean"] == 0.0:
        latency["mean"] = 0.2
    data = {
        "protocol": protocol,
        "topology": {"kind": "full", "latency": latency},
        "workload": {"tx_rate": rng.choice([0.0, 0.05, 0.3]), "initial_txs": rng.randint(0, 5)},
        "snapshot_interval": rng.choice([None, 5.0, 20.0]),
    }
    if protocol == "nakamoto":
        n = rng.randint(1, 6)
        data["nodes"] = [{"resources": {"hash": rng.choice([0.0, 0.5, 1.0, 3.0])}} for _ in range(n)]
        data["nodes"][0]["resources"]["hash"] = 1.0
        data["nakamoto"] = {"mean_block_interval": rng.choice([1.0, 5.0, 10.0]),
                            "tiebreak": rng.choice(["first_seen", "uniform"]),
                            "max_txs_per_block": rng.randint(1, 20),
                            "confirmations": rng.randint(1, 6)}
        if n > 2:
            data["topology"]["kind"] = rng.choice(["full", "line", "ring", "star"])
        if n > 1 and rng.random() < 0.5:
            data["nodes"][-1]["strategy"] = rng.choice(["withhold", "selfish", "censor"])
            if data["nodes"][-1]["strategy"] == "censor":
                data["nodes"][-1]["strategy_params"] = {"targets": [0]}
        horizon = rng.choice([0.0, 30.0, 120.0])
    else:
        k = rng.choice([4, 4, 7])
        data["nodes"] = [{"keys": [i]} for i in range(k)] + [{} for _ in range(rng.randint(0, 2))]
        for i in rng.sample(range(k), rng.randint(0, (k - 1) // 3)):
            data["nodes"][i]["crashed"] = True
        data["observer"] = next(i for i in range(k) if not data["nodes"][i].get("crashed"))
        data["resource_kinds"] = ["hash"]
        data["ibft"] = {"k": k, "round_timeout": rng.choice([2.0, 4.0]), "block_period": 1.0}
        horizon = rng.choice([0.0, 20.0, 60.0])
    n = len(data["nodes"])
    if n > 1 and rng.random() < 0.4:
        start = rng.uniform(0, horizon or 10.0)
        a = rng.randrange(n)
        b = (a + 1) % n
        data["partitions"] = [{"start": start, "end": start + rng.uniform(1, 30), "edges": [[a, b]]}]
        if data["topology"]["kind"] in ("line", "star", "ring"):
            data["topology"]["kind"] = "full"
    data["horizon"] = horizon
    return from_dict(data)
