"""Scenario configuration: schema validation, defaults, digests."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema

SCHEMA_VERSION = 1
# Every stochastic draw comes from random.Random (MT19937) through random();
# the inverse transforms live in simnet. Bump when either changes.
RNG_ALGORITHM = "mt19937-random/v1"


class ConfigInvalid(ValueError):
    pass


@lru_cache(maxsize=1)
def scenario_schema() -> dict:
    text = resources.files("chainsim.schema").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


@dataclass
class NakamotoParams:
    mean_block_interval: float = 600.0
    work_per_block: float = 1.0
    block_reward: float = 1.0
    max_txs_per_block: int = 1000
    fee_policy: str = "per_tx"
    tiebreak: str = "first_seen"
    confirmations: int = 6
    mining: str = "random"


@dataclass
class IbftParams:
    k: int = 4
    rotation: Optional[list[int]] = None
    round_timeout: float = 10.0
    block_period: float = 1.0
    quorum: Optional[int] = None
    max_txs_per_block: int = 1000
    block_reward: float = 1.0

    def __post_init__(self):
        if self.rotation is None:
            self.rotation = list(range(self.k))
        if self.quorum is None:
            self.quorum = (2 * self.k) // 3 + 1


@dataclass
class NodeConfig:
    name: str = ""
    resources: dict[str, float] = field(default_factory=dict)
    keys: list[int] = field(default_factory=list)
    strategy: str = "default"
    strategy_params: dict[str, Any] = field(default_factory=dict)
    crashed: bool = False


@dataclass
class LatencyConfig:
    model: str = "deterministic"
    mean: float = 1.0


@dataclass
class EdgeLatency:
    edge: list[int]
    latency: LatencyConfig


@dataclass
class TopologyConfig:
    kind: str = "full"
    center: int = 0
    edges: list[list[int]] = field(default_factory=list)
    latency: LatencyConfig = field(default_factory=LatencyConfig)
    edge_latency: list[EdgeLatency] = field(default_factory=list)


@dataclass
class PartitionConfig:
    start: float
    end: float
    edges: list[list[int]] = field(default_factory=list)
    groups: list[list[int]] = field(default_factory=list)


@dataclass
class WorkloadConfig:
    tx_rate: float = 0.0
    fee_low: float = 0.0
    fee_high: float = 1.0
    initial_txs: int = 0


@dataclass
class UtilityConfig:
    cost_rate: float = 0.0
    # None: use the protocol's block reward
    block_reward: Optional[float] = None
    include_fees: bool = True
    own_parent_bonus: float = 0.0
    normalize: str = "absolute"


@dataclass
class ScriptEntry:
    t: float
    action: str
    node: int
    label: Optional[str] = None
    parent: Optional[str] = None
    blocks: list[str] = field(default_factory=list)
    fee: float = 0.0


@dataclass
class ScenarioConfig:
    protocol: str
    nodes: list[NodeConfig]
    schema_version: int = SCHEMA_VERSION
    name: str = ""
    nakamoto: NakamotoParams = field(default_factory=NakamotoParams)
    ibft: IbftParams = field(default_factory=IbftParams)
    resource_kinds: list[str] = field(default_factory=lambda: ["hash"])
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    partitions: list[PartitionConfig] = field(default_factory=list)
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    utility: UtilityConfig = field(default_factory=UtilityConfig)
    horizon: float = 3600.0
    observer: int = 0
    snapshot_interval: Optional[float] = None
    snapshot_times: list[float] = field(default_factory=list)
    script: list[ScriptEntry] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return config_digest(self.to_dict())

    def replace(self, **changes) -> "ScenarioConfig":
        data = self.to_dict()
        data.update(changes)
        return from_dict(data)

    def all_resource_kinds(self) -> list[str]:
        kinds = list(self.resource_kinds)
        if self.protocol == "ibft":
            kinds += [f"key{i}" for i in range(self.ibft.k) if f"key{i}" not in kinds]
        return kinds

    def resource_vector(self, n: int) -> tuple[float, ...]:
        node = self.nodes[n]
        out = []
        for kind in self.all_resource_kinds():
            if kind.startswith("key") and kind[3:].isdigit() and self.protocol == "ibft":
                out.append(1.0 if int(kind[3:]) in node.keys else 0.0)
            else:
                out.append(float(node.resources.get(kind, 0.0)))
        return tuple(out)


def config_digest(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


_NESTED = {
    "nakamoto": NakamotoParams,
    "ibft": IbftParams,
    "topology": TopologyConfig,
    "workload": WorkloadConfig,
    "utility": UtilityConfig,
    "latency": LatencyConfig,
}
_NESTED_LISTS = {
    "nodes": NodeConfig,
    "partitions": PartitionConfig,
    "script": ScriptEntry,
    "edge_latency": EdgeLatency,
}


def _build(cls, data: dict):
    kwargs = {}
    names = {f.name for f in fields(cls)}
    for key, value in data.items():
        if key not in names:
            raise ConfigInvalid(f"{cls.__name__}: unknown field {key!r}")
        if key in _NESTED and isinstance(value, dict):
            value = _build(_NESTED[key], value)
        elif key in _NESTED_LISTS and isinstance(value, list):
            value = [_build(_NESTED_LISTS[key], v) if isinstance(v, dict) else v for v in value]
        kwargs[key] = value
    return cls(**kwargs)


def from_dict(data: dict) -> ScenarioConfig:
    data = copy.deepcopy(data)
    try:
        jsonschema.validate(_strip_nulls(data), scenario_schema())
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path)
        raise ConfigInvalid(f"{path or '<root>'}: {e.message}") from None
    try:
        cfg = _build(ScenarioConfig, data)
    except TypeError as e:
        raise ConfigInvalid(str(e)) from None
    validate(cfg)
    return cfg


def _strip_nulls(data: Any) -> Any:
    # asdict() round-trips emit None for unset optionals; the schema omits them
    if isinstance(data, dict):
        return {k: _strip_nulls(v) for k, v in data.items() if v is not None}
    if isinstance(data, list):
        return [_strip_nulls(v) for v in data]
    return data


def load(path: str | Path) -> ScenarioConfig:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigInvalid(f"{path}: {e}") from None
    return from_dict(data)


def validate(cfg: ScenarioConfig) -> None:
    n = cfg.n_nodes
    if cfg.observer >= n:
        raise ConfigInvalid(f"observer {cfg.observer} out of range")
    for i, node in enumerate(cfg.nodes):
        if not node.name:
            node.name = str(i)
        for kind in node.resources:
            if kind not in cfg.resource_kinds:
                raise ConfigInvalid(f"node {i}: undeclared resource kind {kind!r}")
    names = [node.name for node in cfg.nodes]
    if len(set(names)) != n:
        raise ConfigInvalid("node names must be unique")

    if cfg.protocol == "nakamoto":
        p = cfg.nakamoto
        if p.mining == "random" and "hash" not in cfg.resource_kinds:
            raise ConfigInvalid("nakamoto mining needs a 'hash' resource kind")
    else:
        p = cfg.ibft
        if not 1 <= p.quorum <= p.k:
            raise ConfigInvalid(f"quorum {p.quorum} outside 1..{p.k}")
        if sorted(p.rotation) != list(range(p.k)):
            raise ConfigInvalid("rotation must be a permutation of 0..k-1")
        owners = [key for node in cfg.nodes for key in node.keys]
        for key in owners:
            if key >= p.k:
                raise ConfigInvalid(f"key {key} outside 0..{p.k - 1}")

    topo = cfg.topology
    for e in topo.edges + [el.edge for el in topo.edge_latency]:
        if not all(0 <= v < n for v in e) or e[0] == e[1]:
            raise ConfigInvalid(f"bad edge {e}")
    if topo.kind == "star" and not 0 <= topo.center < n:
        raise ConfigInvalid("star center out of range")
    for part in cfg.partitions:
        if part.end < part.start:
            raise ConfigInvalid("partition ends before it starts")
        for e in part.edges:
            if not all(0 <= v < n for v in e):
                raise ConfigInvalid(f"bad partition edge {e}")
        for g in part.groups:
            if not all(0 <= v < n for v in g):
                raise ConfigInvalid(f"bad partition group {g}")
    w = cfg.workload
    if w.fee_high < w.fee_low:
        raise ConfigInvalid("fee_high < fee_low")
    for entry in cfg.script:
        if entry.node >= n:
            raise ConfigInvalid(f"script node {entry.node} out of range")
        if entry.action == "mine" and cfg.protocol != "nakamoto":
            raise ConfigInvalid("scripted mining is nakamoto-only")


def to_json(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def is_config(obj: Any) -> bool:
    return is_dataclass(obj) and isinstance(obj, ScenarioConfig)
