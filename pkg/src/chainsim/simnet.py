"""Discrete-event network engine.

One `Simulator` owns the event queue, the global block DAG, the topology and
every node's state. Events are processed strictly in (time, seq) order on a
single thread; every draw comes from a named `random.Random` stream derived
from the run seed, so a (scenario, seed) pair always yields the same trace.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Optional, Sequence, Union

from .chain import GENESIS, Block, BlockDag, Transaction
from .config import (RNG_ALGORITHM, ConfigInvalid, LatencyConfig, ScenarioConfig,
                     from_dict)
from .events import (BLOCK_ARRIVAL, BLOCK_MINED, PARTITION_CHANGE, PROTOCOL_MSG,
                     ROUND_TIMEOUT, SNAPSHOT, STRATEGY_WAKE, TX_ARRIVAL, TX_CREATED,
                     Adopt, AdvanceRound, Broadcast, Decision, Event, EventQueue,
                     Finalize, Propose, Publish, Relay)
from .protocols.forkchoice import final_tip
from .protocols.ibft import (PROPOSAL, IbftMessage, IbftState, ibft_after_head_change,
                             ibft_on_timeout, ibft_propose, ibft_proposer, ibft_step)
from .protocols.nakamoto import (Nakamoto, exponential, nakamoto_make_block,
                                 nakamoto_next_mining_time, select_txs)
from .strategies import make_strategy

TRACE_SCHEMA = "chainsim-trace/1"


class ZeroTotalResource(ValueError):
    pass


class InvariantViolation(RuntimeError):
    """The engine reached a state its own invariants rule out."""


class Streams:
    """Named, independently seeded random streams."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, random.Random] = {}

    def get(self, name: str) -> random.Random:
        rng = self._streams.get(name)
        if rng is None:
            rng = self._streams[name] = random.Random(f"{self.seed}:{name}")
        return rng


def sample_latency(lat: LatencyConfig, rng: random.Random) -> float:
    if lat.model == "deterministic":
        return lat.mean
    return exponential(rng, lat.mean)


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


class Topology:
    def __init__(self, n: int, edges: Iterable[tuple[int, int]], default: LatencyConfig,
                 overrides: Optional[dict] = None):
        self.n = n
        self.edges = sorted({_edge(a, b) for a, b in edges if a != b})
        self.adj: list[list[int]] = [[] for _ in range(n)]
        for a, b in self.edges:
            self.adj[a].append(b)
            self.adj[b].append(a)
        for lst in self.adj:
            lst.sort()
        self.default = default
        self.latencies = dict(overrides or {})
        self.cut: dict[tuple[int, int], int] = {}

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "Topology":
        n = cfg.n_nodes
        t = cfg.topology
        if t.kind == "full":
            edges = [(a, b) for a in range(n) for b in range(a + 1, n)]
        elif t.kind == "line":
            edges = [(i, i + 1) for i in range(n - 1)]
        elif t.kind == "ring":
            edges = [(i, (i + 1) % n) for i in range(n)] if n > 2 else [(i, i + 1) for i in range(n - 1)]
        elif t.kind == "star":
            edges = [(t.center, i) for i in range(n) if i != t.center]
        else:
            edges = [tuple(e) for e in t.edges]
        overrides = {_edge(*el.edge): el.latency for el in t.edge_latency}
        topo = cls(n, edges, t.latency, overrides)
        for e in overrides:
            if e not in topo.edges:
                raise ConfigInvalid(f"latency given for missing edge {list(e)}")
        if not topo.connected():
            raise ConfigInvalid("topology is not connected")
        return topo

    def connected(self) -> bool:
        if self.n <= 1:
            return True
        seen = {0}
        stack = [0]
        while stack:
            for m in self.adj[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return len(seen) == self.n

    def neighbors(self, n: int) -> list[int]:
        return self.adj[n]

    def is_up(self, a: int, b: int) -> bool:
        return not self.cut.get(_edge(a, b))

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.adj[a]

    def latency(self, a: int, b: int, rng: random.Random) -> float:
        return sample_latency(self.latencies.get(_edge(a, b), self.default), rng)


@dataclass(slots=True)
class NodeState:
    index: int
    name: str
    resources: tuple
    strategy: str = "default"
    keys: tuple = ()
    crashed: bool = False
    view: set = field(default_factory=lambda: {GENESIS})
    head: int = GENESIS
    seen: dict = field(default_factory=lambda: {GENESIS: 0})
    mempool: dict = field(default_factory=dict)       # tx id -> fee, txs not on the head chain
    messages: set = field(default_factory=set)        # protocol messages received
    known_txs: set = field(default_factory=set)
    included: set = field(default_factory=set)        # txs on the head chain
    pending: dict = field(default_factory=dict)       # missing parent -> buffered arrivals
    pending_ids: set = field(default_factory=set)
    protocol_local: Any = None
    mining_token: int = 0
    timer_token: int = 0
    hash_fraction: float = 0.0


@dataclass(frozen=True, slots=True)
class NodeSnapshot:
    view: frozenset
    head: int
    mempool: frozenset
    resources: tuple


@dataclass(frozen=True)
class SystemState:
    time: float
    nodes: tuple
    dag: BlockDag = field(compare=False, repr=False)
    resource_kinds: tuple = ()

    def heads(self) -> list[int]:
        return [n.head for n in self.nodes]

    def views(self) -> list[list[int]]:
        return [sorted(n.view) for n in self.nodes]

    def digest(self) -> str:
        doc = {
            "t": self.time,
            "nodes": [[sorted(n.view), n.head, sorted(n.mempool), list(n.resources)]
                      for n in self.nodes],
        }
        blob = json.dumps(doc, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def resource_fraction(state: Union[SystemState, Sequence[Sequence[float]]], n: int,
                      i: Union[int, str] = 0) -> float:
    """p_{n,i} = r_{n,i} / R_i."""
    vectors = _resource_vectors(state)
    col = _resource_index(state, i)
    total = sum(v[col] for v in vectors)
    if total <= 0:
        raise ZeroTotalResource(f"resource {i!r} has zero total")
    return vectors[n][col] / total


def alpha_strong(state, group: Iterable[int], i: Union[int, str], alpha: float) -> bool:
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    share = sum(resource_fraction(state, n, i) for n in set(group))
    # fractions of the whole set can add up to 0.9999999999999999
    return share >= alpha - 1e-12


def _resource_vectors(state) -> list:
    if isinstance(state, SystemState):
        return [n.resources for n in state.nodes]
    return [tuple(v) if isinstance(v, (list, tuple)) else (v,) for v in state]


def _resource_index(state, i) -> int:
    if isinstance(i, str):
        kinds = state.resource_kinds if isinstance(state, SystemState) else ()
        if i not in kinds:
            raise KeyError(f"unknown resource kind {i!r}")
        return kinds.index(i)
    return i


@dataclass(slots=True)
class EventRecord:
    t: float
    seq: int
    kind: str
    node: Optional[int] = None
    block: Optional[int] = None
    parent: Optional[int] = None
    extra: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"t": self.t, "seq": self.seq, "kind": self.kind, "node": self.node,
                "block": self.block, "parent": self.parent, "extra": self.extra or {}}


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Trace:
    """Complete record of one run."""

    def __init__(self, seed: int, config: ScenarioConfig, records: list, dag: BlockDag,
                 transactions: dict, labels: dict, final_state: SystemState,
                 snapshots: list, horizon: float, init_txs: Sequence = ()):
        self.seed = seed
        self.config = config
        self.records = records
        self.dag = dag
        self.transactions = transactions
        self.labels = labels
        self.final_state = final_state
        self.snapshots = snapshots
        self.horizon = horizon
        self.init_txs = list(init_txs)
        self._lines: Optional[list[str]] = None

    @property
    def digest(self) -> str:
        return self.config.digest()

    @property
    def n_nodes(self) -> int:
        return self.config.n_nodes

    @property
    def following(self) -> list[int]:
        """Nodes running the default strategy that have not crashed."""
        return [i for i, nc in enumerate(self.config.nodes)
                if nc.strategy == "default" and not nc.crashed]

    @property
    def events(self) -> list:
        return [r for r in self.records if r.kind != SNAPSHOT]

    def head_changes(self) -> Iterator[tuple[float, int, int, int]]:
        for r in self.records:
            if r.extra and "h" in r.extra:
                for old, new in r.extra["h"]:
                    yield r.t, r.node, old, new

    def sends(self) -> Iterator[tuple[float, int, str, Optional[int], Optional[int], int]]:
        for r in self.records:
            if r.extra and "s" in r.extra:
                for kind, block, rnd, count in r.extra["s"]:
                    yield r.t, r.node, kind, block, rnd, count

    def finalizations(self) -> Iterator[tuple[float, int, int]]:
        """(t, node, block) for every explicit finalization (BFT protocols)."""
        for r in self.records:
            if r.extra and "fin" in r.extra:
                for b in r.extra["fin"]:
                    yield r.t, r.node, b

    def reference_chain(self, observer: Optional[int] = None) -> list[int]:
        """Finalized prefix of the observer's head chain at the horizon, genesis first."""
        obs = self.config.observer if observer is None else observer
        head = self.final_state.nodes[obs].head
        if self.config.protocol == "nakamoto":
            tip = final_tip(self.dag, head, self.config.nakamoto.confirmations)
            if tip is None:
                return [self.dag.genesis]
        else:
            tip = head
        return list(reversed(self.dag.chain_of(tip)))

    # -- serialization --

    def header(self) -> dict:
        return {"schema": TRACE_SCHEMA, "seed": self.seed, "scenario": self.config.to_dict(),
                "digest": self.digest, "rng": RNG_ALGORITHM, "horizon": self.horizon}

    def lines(self) -> list[str]:
        if self._lines is None:
            out = [_dumps(self.header())]
            if self.init_txs:
                out.append(_dumps({"kind": "init", "txs": [list(t) for t in self.init_txs]}))
            out.extend(_dumps(r.to_dict()) for r in self.records)
            fs = self.final_state
            out.append(_dumps({"kind": "final", "t": fs.time, "digest": fs.digest(),
                               "heads": fs.heads(), "views": fs.views()}))
            self._lines = out
        return self._lines

    def checksum(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def dumps(self) -> str:
        return "\n".join(self.lines() + [_dumps({"kind": "footer", "checksum": self.checksum()})]) + "\n"

    def write(self, path) -> str:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())
        return self.checksum()

    @classmethod
    def read(cls, path) -> "Trace":
        with open(path, encoding="utf-8") as f:
            return cls.from_lines(f.read().splitlines())

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "Trace":
        """Rebuild a trace (DAG, transactions, states) from its exported lines."""
        lines = [ln for ln in lines if ln.strip()]
        if not lines:
            raise ValueError("empty trace file")
        header = json.loads(lines[0])
        if header.get("schema") != TRACE_SCHEMA:
            raise ValueError(f"not a {TRACE_SCHEMA} trace")
        config = from_dict(header["scenario"])
        dag = BlockDag.with_genesis()
        txs: dict[int, Transaction] = {}
        labels: dict[str, int] = {"genesis": GENESIS}
        records: list[EventRecord] = []
        final = None
        init_txs = []
        for line in lines[1:]:
            d = json.loads(line)
            kind = d.get("kind")
            if kind == "footer":
                continue
            if kind == "init":
                init_txs = [tuple(t) for t in d["txs"]]
                for tid, fee, creator in init_txs:
                    txs[tid] = Transaction(tid, 0.0, fee, creator)
                continue
            if kind == "final":
                final = d
                continue
            extra = d.get("extra") or None
            rec = EventRecord(d["t"], d["seq"], kind, d["node"], d["block"], d["parent"], extra)
            if extra:
                if "nb" in extra:
                    bid, parent, ts, work, btxs, creator, payload = extra["nb"]
                    dag.add(Block(bid, parent, ts, work, tuple(btxs), creator, payload))
                if "tx" in extra:
                    tid, created, fee, creator = extra["tx"]
                    txs[tid] = Transaction(tid, created, fee, creator)
                if "label" in extra:
                    labels[extra["label"]] = rec.block
            records.append(rec)
        if final is None:
            raise ValueError("trace has no final record")
        kinds = tuple(config.all_resource_kinds())
        resources = [config.resource_vector(i) for i in range(config.n_nodes)]
        nodes = tuple(NodeSnapshot(frozenset(v), h, frozenset(), resources[i])
                      for i, (v, h) in enumerate(zip(final["views"], final["heads"])))
        fs = SystemState(final["t"], nodes, dag, kinds)
        snaps = []
        for r in records:
            if r.kind == SNAPSHOT:
                ns = tuple(NodeSnapshot(frozenset(v), h, frozenset(), resources[i])
                           for i, (v, h) in enumerate(zip(r.extra["views"], r.extra["heads"])))
                snaps.append(SystemState(r.t, ns, dag, kinds))
        trace = cls(header["seed"], config, records, dag, txs, labels, fs, snaps,
                    header["horizon"], init_txs)
        # mempools are not exported, so the rebuilt final state cannot reproduce
        # the recorded digest; keep the lines as read
        trace._lines = [ln for ln in lines if json.loads(ln).get("kind") != "footer"]
        return trace


def verify_lines(lines: Sequence[str]) -> bool:
    """Check the footer checksum of an exported trace."""
    lines = [ln for ln in lines if ln.strip()]
    footer = json.loads(lines[-1])
    if footer.get("kind") != "footer":
        return False
    h = hashlib.sha256()
    for line in lines[:-1]:
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest() == footer.get("checksum")


class Simulator:
    def __init__(self, config: ScenarioConfig, seed: int = 0):
        self.cfg = config
        self.seed = seed
        self.streams = Streams(seed)
        self.queue = EventQueue()
        self.dag = BlockDag.with_genesis()
        self.topology = Topology.from_config(config)
        self.txs: dict[int, Transaction] = {}
        self.labels: dict[str, int] = {"genesis": GENESIS}
        self.records: list[EventRecord] = []
        self.snapshots: list[SystemState] = []
        self.init_txs: list[tuple] = []
        self._next_block = 1
        self._next_tx = 0
        self._rec: Optional[EventRecord] = None
        self._event: Optional[Event] = None
        self.kinds = tuple(config.all_resource_kinds())

        self.nodes = [
            NodeState(index=i, name=nc.name, resources=config.resource_vector(i),
                      strategy=nc.strategy, keys=tuple(sorted(set(nc.keys))),
                      crashed=nc.crashed)
            for i, nc in enumerate(config.nodes)
        ]
        self.strategies = [make_strategy(nc.strategy, nc.strategy_params) for nc in config.nodes]
        self._lat_rng = self.streams.get("latency")
        self._tie_rng = self.streams.get("tiebreak")

        if config.protocol == "nakamoto":
            self.params = config.nakamoto
            self.nakamoto = Nakamoto(self.params)
            if self.params.mining == "random":
                total = sum(n.resources[self.kinds.index("hash")] for n in self.nodes)
                if total <= 0:
                    raise ConfigInvalid("no node has any hash power")
                for n in self.nodes:
                    n.hash_fraction = n.resources[self.kinds.index("hash")] / total
            self.gossip_targets = [list(self.topology.adj[i]) for i in range(config.n_nodes)]
        else:
            self.params = config.ibft
            self.keyed = [i for i, n in enumerate(self.nodes) if n.keys]
            for a in self.keyed:
                for b in self.keyed:
                    if a < b and not self.topology.has_edge(a, b):
                        raise ConfigInvalid(f"keyed nodes {a} and {b} need a direct link")
            keyed = set(self.keyed)
            # finalized blocks travel by gossip to observers only; keyed nodes learn them by voting
            self.gossip_targets = [[m for m in self.topology.adj[i] if m not in keyed]
                                   for i in range(config.n_nodes)]
            self.peers = [[m for m in self.keyed if m != i] for i in range(config.n_nodes)]
            for n in self.nodes:
                if n.keys:
                    n.protocol_local = IbftState()

        self._handlers = {
            BLOCK_MINED: self._on_mined,
            BLOCK_ARRIVAL: self._on_block_arrival,
            TX_CREATED: self._on_tx_created,
            TX_ARRIVAL: self._on_tx_arrival,
            PROTOCOL_MSG: self._on_protocol_msg,
            ROUND_TIMEOUT: self._on_timeout,
            PARTITION_CHANGE: self._on_partition,
            STRATEGY_WAKE: self._on_wake,
            SNAPSHOT: self._on_snapshot,
        }

    @property
    def now(self) -> float:
        return self.queue.clock

    # -- setup --

    def _setup(self, horizon: float) -> None:
        cfg = self.cfg
        q = self.queue
        w = cfg.workload
        if w.initial_txs:
            rng = self.streams.get("workload")
            for _ in range(w.initial_txs):
                tid = self._new_tx_id()
                fee = w.fee_low + (w.fee_high - w.fee_low) * rng.random()
                tx = Transaction(tid, 0.0, fee, tid % cfg.n_nodes)
                self.txs[tid] = tx
                self.init_txs.append((tid, fee, tx.creator))
                for n in self.nodes:
                    n.known_txs.add(tid)
                    n.mempool[tid] = fee
        self._capture(0.0, q.next_seq())

        if cfg.protocol == "nakamoto" and self.params.mining == "random":
            for n in self.nodes:
                self._schedule_mining(n)
        if cfg.protocol == "ibft":
            for i in self.keyed:
                if not self.nodes[i].crashed:
                    self._start_round(self.nodes[i], 0)
        if w.tx_rate > 0:
            rng = self.streams.get("workload")
            for n in self.nodes:
                if not n.crashed:
                    q.push(exponential(rng, 1.0 / w.tx_rate), TX_CREATED, n.index, {})
        for j, part in enumerate(cfg.partitions):
            q.push(part.start, PARTITION_CHANGE, None, {"partition": j, "phase": "start"})
            q.push(part.end, PARTITION_CHANGE, None, {"partition": j, "phase": "end"})
        for entry in cfg.script:
            if entry.action == "mine":
                q.push(entry.t, BLOCK_MINED, entry.node,
                       {"token": None, "label": entry.label, "parent": entry.parent})
            elif entry.action == "publish":
                q.push(entry.t, STRATEGY_WAKE, entry.node, {"publish": list(entry.blocks)})
            else:
                q.push(entry.t, TX_CREATED, entry.node, {"fee": entry.fee, "label": entry.label})
        for t in sorted(set(cfg.snapshot_times)):
            if t > 0:
                q.push(t, SNAPSHOT, None, {})
        if cfg.snapshot_interval:
            q.push(cfg.snapshot_interval, SNAPSHOT, None, {"every": cfg.snapshot_interval})

    def run(self, horizon: Optional[float] = None) -> Trace:
        horizon = self.cfg.horizon if horizon is None else horizon
        self._setup(horizon)
        q = self.queue
        handlers = self._handlers
        records = self.records
        while q:
            if q.peek_time() > horizon:
                break
            ev = q.pop()
            rec = EventRecord(ev.time, ev.seq, ev.kind, ev.node)
            self._rec = rec
            self._event = ev
            if handlers[ev.kind](ev, rec) is not False:
                records.append(rec)
        self.queue.clock = max(self.queue.clock, horizon)
        self._check_invariants()
        final = self._state(horizon)
        return Trace(self.seed, self.cfg, records, self.dag, self.txs, self.labels, final,
                     self.snapshots, horizon, self.init_txs)

    # -- bookkeeping --

    def _new_tx_id(self) -> int:
        tid = self._next_tx
        self._next_tx += 1
        return tid

    def _note(self, key: str, value) -> None:
        rec = self._rec
        if rec.extra is None:
            rec.extra = {}
        rec.extra.setdefault(key, []).append(value)

    def _set(self, key: str, value) -> None:
        rec = self._rec
        if rec.extra is None:
            rec.extra = {}
        rec.extra[key] = value

    def _state(self, t: float) -> SystemState:
        nodes = tuple(NodeSnapshot(frozenset(n.view), n.head, frozenset(n.mempool), n.resources)
                      for n in self.nodes)
        return SystemState(t, nodes, self.dag, self.kinds)

    def snapshot(self, t: Optional[float] = None) -> SystemState:
        return self._state(self.now if t is None else t)

    def _capture(self, t: float, seq: int) -> None:
        state = self._state(t)
        self.snapshots.append(state)
        self.records.append(EventRecord(t, seq, SNAPSHOT, extra={
            "digest": state.digest(), "heads": state.heads(), "views": state.views()}))

    def _check_invariants(self) -> None:
        for n in self.nodes:
            if n.head not in n.view or GENESIS not in n.view:
                raise InvariantViolation(f"node {n.index}: head {n.head} outside its view")
            for b in n.view:
                if b not in self.dag:
                    raise InvariantViolation(f"node {n.index}: view holds unknown block {b}")

    def _add_view(self, node: NodeState, b: int) -> bool:
        if b in node.view:
            return False
        node.view.add(b)
        node.seen[b] = len(node.seen)
        self._note("v", b)
        return True

    def _new_block(self, parent: int, creator: int, work: float, txs: tuple,
                   payload=None) -> Block:
        bid = self._next_block
        self._next_block += 1
        blk = Block(bid, parent, self.now, work, txs, creator, payload)
        self.dag.add(blk)
        self._set("nb", [bid, parent, blk.timestamp, work, list(txs), creator, payload])
        rec = self._rec
        rec.block, rec.parent = bid, parent
        return blk

    def _new_tx(self, node: NodeState, fee: float) -> Transaction:
        tx = Transaction(self._new_tx_id(), self.now, fee, node.index)
        self.txs[tx.id] = tx
        self._set("tx", [tx.id, tx.created_at, tx.fee, tx.creator])
        return tx

    # -- strategy plumbing --

    def _decide(self, node: NodeState, event: Event, prescribed: list) -> None:
        ctx = Decision(node=node, event=event, prescribed=prescribed, dag=self.dag,
                       rng=self.streams.get(f"strategy:{node.index}"), sim=self)
        self.execute(node, self.strategies[node.index].decide(ctx, event))

    def execute(self, node: NodeState, actions: Iterable) -> None:
        for a in actions:
            t = type(a)
            if t is Adopt:
                self._adopt(node, a.block)
            elif t is Publish:
                for b in a.blocks:
                    self._gossip(node, b, None, a.rush)
            elif t is Relay:
                self._gossip(node, a.block, a.exclude, 0.0)
            elif t is Broadcast:
                self._broadcast(node, a.msg)
            elif t is Propose:
                self._propose(node, a)
            elif t is Finalize:
                self._finalize(node, a.block)
            elif t is AdvanceRound:
                self._advance(node, a.round)
            else:
                raise InvariantViolation(f"unknown action {a!r}")

    def _adopt(self, node: NodeState, new: int) -> None:
        old = node.head
        if new == old:
            return
        if new not in node.view:
            raise InvariantViolation(f"node {node.index} adopting unseen block {new}")
        node.head = new
        self._note("h", [old, new])
        dag = self.dag
        base = dag.common_prefix(old, new)
        if base != old:
            for b in dag.branch(old, base):
                for tx in dag.blocks[b].txs:
                    node.included.discard(tx)
                    node.known_txs.add(tx)
                    node.mempool[tx] = self.txs[tx].fee
        for b in dag.branch(new, base):
            for tx in dag.blocks[b].txs:
                node.included.add(tx)
                node.known_txs.add(tx)
                node.mempool.pop(tx, None)
        if self.cfg.protocol == "nakamoto" and self.params.mining == "random":
            self._schedule_mining(node)

    def deliver(self, origin: int, kind: str, payload: dict, targets: Iterable[int],
                exclude: Optional[int] = None) -> tuple[list[Event], int]:
        """Arrival events for every target across a live edge, plus the send count.

        Sends over severed edges are dropped; sends to crashed nodes count but
        never arrive.
        """
        out = []
        count = 0
        dropped = 0
        topo = self.topology
        for m in targets:
            if m == exclude:
                continue
            if not topo.is_up(origin, m):
                dropped += 1
                continue
            count += 1
            if self.nodes[m].crashed:
                continue
            t = self.now + topo.latency(origin, m, self._lat_rng)
            out.append(Event(t, self.queue.next_seq(), kind, m, payload))
        if dropped:
            self._note("drop", dropped)
        return out, count

    def _send(self, origin: int, kind: str, payload: dict, targets, exclude, label) -> None:
        events, count = self.deliver(origin, kind, payload, targets, exclude)
        for e in events:
            self.queue.schedule(e)
        if count:
            self._note("s", label + [count])

    def _gossip(self, node: NodeState, b: int, exclude: Optional[int], rush: float) -> None:
        payload = {"block": b, "sender": node.index, "rush": rush}
        self._send(node.index, BLOCK_ARRIVAL, payload, self.gossip_targets[node.index],
                   exclude, ["block", b, None])

    # -- Nakamoto --

    def _schedule_mining(self, node: NodeState) -> None:
        if node.crashed or node.hash_fraction <= 0:
            return
        node.mining_token += 1
        t = nakamoto_next_mining_time(self.now, node.hash_fraction, self.params,
                                      self.streams.get("mining"))
        self.queue.push(t, BLOCK_MINED, node.index, {"token": node.mining_token})

    def _on_mined(self, ev: Event, rec: EventRecord):
        node = self.nodes[ev.node]
        p = ev.payload
        token = p.get("token")
        if node.crashed or (token is not None and token != node.mining_token):
            return False
        parent = node.head
        if p.get("parent") is not None:
            parent = self.labels[p["parent"]]
            if parent not in node.view:
                raise InvariantViolation(f"script mines on {p['parent']} unseen by node {node.index}")
        mempool = node.mempool if parent == node.head else {}
        strat = self.strategies[node.index]
        txs = strat.filter_txs(select_txs(mempool, self.params.max_txs_per_block), self.txs)
        blk = self._new_block(parent, node.index, self.params.work_per_block, txs)
        if p.get("label"):
            self.labels[p["label"]] = blk.id
            self._set("label", p["label"])
        self._add_view(node, blk.id)
        e = Event(ev.time, ev.seq, BLOCK_MINED, node.index, {"block": blk.id})
        before = node.mining_token
        self._decide(node, e, self.nakamoto.prescribe(self.dag, node.head, e, self._tie_rng))
        if token is not None and node.mining_token == before:
            self._schedule_mining(node)

    def _on_block_arrival(self, ev: Event, rec: EventRecord):
        node = self.nodes[ev.node]
        b = ev.payload["block"]
        rec.block = b
        rec.parent = self.dag.blocks[b].parent
        if self.cfg.protocol == "ibft" and node.keys:
            return self._ibft_sync(node, ev)
        if b in node.view or b in node.pending_ids:
            self._set("dup", True)
            return
        if rec.parent not in node.view:
            node.pending.setdefault(rec.parent, []).append(ev)
            node.pending_ids.add(b)
            self._set("buffered", True)
            return
        stack = [ev]
        while stack:
            e = stack.pop()
            blk = e.payload["block"]
            self._add_view(node, blk)
            if self.cfg.protocol == "nakamoto":
                prescribed = self.nakamoto.prescribe(self.dag, node.head, e, self._tie_rng)
            else:
                prescribed = [Relay(blk, e.payload["sender"])]
                if self.dag.blocks[blk].parent == node.head:
                    prescribed.insert(0, Adopt(blk))
            self._decide(node, e, prescribed)
            waiting = node.pending.pop(blk, None)
            if waiting:
                for w in reversed(waiting):
                    node.pending_ids.discard(w.payload["block"])
                    stack.append(w)

    def _on_tx_created(self, ev: Event, rec: EventRecord):
        node = self.nodes[ev.node]
        if node.crashed:
            return False
        p = ev.payload
        w = self.cfg.workload
        scripted = "fee" in p
        if scripted:
            fee = p["fee"]
        else:
            fee = w.fee_low + (w.fee_high - w.fee_low) * self.streams.get("workload").random()
        tx = self._new_tx(node, fee)
        if p.get("label"):
            self._set("label", p["label"])
        node.known_txs.add(tx.id)
        node.mempool[tx.id] = fee
        self._send(node.index, TX_ARRIVAL, {"tx": tx.id, "sender": node.index},
                   self.topology.adj[node.index], None, ["tx", None, None])
        if not scripted:
            self.queue.push(self.now + exponential(self.streams.get("workload"), 1.0 / w.tx_rate),
                            TX_CREATED, node.index, {})

    def _on_tx_arrival(self, ev: Event, rec: EventRecord):
        node = self.nodes[ev.node]
        tid = ev.payload["tx"]
        if tid in node.known_txs:
            self._set("dup", True)
            return
        node.known_txs.add(tid)
        if tid not in node.included:
            node.mempool[tid] = self.txs[tid].fee
        self._set("txid", tid)
        self._send(node.index, TX_ARRIVAL, {"tx": tid, "sender": node.index},
                   self.topology.adj[node.index], ev.payload["sender"], ["tx", None, None])

    # -- partitions, script, snapshots --

    def _partition_edges(self, j: int) -> list[tuple[int, int]]:
        part = self.cfg.partitions[j]
        edges = {_edge(*e) for e in part.edges}
        if part.groups:
            group_of = {}
            for g, members in enumerate(part.groups):
                for m in members:
                    group_of[m] = g
            for a, b in self.topology.edges:
                if group_of.get(a, -1) != group_of.get(b, -1):
                    edges.add((a, b))
        return sorted(edges)

    def _on_partition(self, ev: Event, rec: EventRecord):
        j = ev.payload["partition"]
        edges = self._partition_edges(j)
        cut = self.topology.cut
        self._set("partition", j)
        if ev.payload["phase"] == "start":
            for e in edges:
                cut[e] = cut.get(e, 0) + 1
            self._set("cut", [list(e) for e in edges])
            return
        healed = []
        for e in edges:
            cut[e] = cut.get(e, 0) - 1
            if cut[e] <= 0:
                del cut[e]
                healed.append(e)
        self._set("healed", [list(e) for e in healed])
        for a, b in healed:
            self._exchange(a, b)
            self._exchange(b, a)

    def _exchange(self, a: int, b: int) -> None:
        """Send node b every block a knows and b lacks, lowest first."""
        src, dst = self.nodes[a], self.nodes[b]
        if src.crashed or dst.crashed:
            return
        dag = self.dag
        if self.cfg.protocol == "nakamoto":
            missing = src.view - dst.view
        else:
            hb = dag.height(dst.head)
            missing = {x for x in dag.walk(src.head) if dag.height(x) > hb}
        if not missing:
            return
        lat = self.topology.latency(a, b, self._lat_rng)
        for x in sorted(missing, key=lambda x: (dag.height(x), x)):
            self.queue.push(self.now + lat, BLOCK_ARRIVAL, b,
                            {"block": x, "sender": a, "rush": 0.0, "sync": True})
        self._note("s", ["sync", None, None, len(missing)])

    def _on_wake(self, ev: Event, rec: EventRecord):
        node = self.nodes[ev.node]
        p = ev.payload
        if node.crashed:
            return False
        if "publish" in p:
            blocks = tuple(self.labels[x] for x in p["publish"] if self.labels.get(x) in node.view)
            self._set("publish", list(blocks))
            self.execute(node, [Publish(blocks)])
            return
        if "propose" in p:
            st = node.protocol_local
            if st is None or st.round != p["propose"]:
                return False
            self._set("round", p["propose"])
            self._decide(node, ev, ibft_propose(st, node.keys, node.head, p["propose"],
                                                self.params, self.dag))
            return
        self._decide(node, ev, [])

    def _on_snapshot(self, ev: Event, rec: EventRecord):
        state = self._state(ev.time)
        self.snapshots.append(state)
        rec.extra = {"digest": state.digest(), "heads": state.heads(), "views": state.views()}
        every = ev.payload.get("every")
        if every:
            self.queue.push(ev.time + every, SNAPSHOT, None, {"every": every})

    # -- IBFT --

    def _start_round(self, node: NodeState, r: int) -> None:
        st = node.protocol_local
        st.round = r
        st.progress = False
        node.timer_token += 1
        p = self.params
        self.queue.push(self.now + p.round_timeout, ROUND_TIMEOUT, node.index,
                        {"round": r, "token": node.timer_token})
        if ibft_proposer(r, p) in node.keys:
            self.queue.push(self.now + p.block_period, STRATEGY_WAKE, node.index, {"propose": r})

    def _broadcast(self, node: NodeState, msg: IbftMessage) -> None:
        payload = {"msg": msg, "sender": node.index}
        self._send(node.index, PROTOCOL_MSG, payload, self.peers[node.index], None,
                   [msg.kind, msg.block, msg.round])
        # a node counts its own vote
        self._receive(node, msg)

    def _receive(self, node: NodeState, msg: IbftMessage) -> None:
        if msg.kind == PROPOSAL:
            self._add_view(node, msg.block)
        node.messages.add(msg)
        st = node.protocol_local
        prescribed = ibft_step(st, node.keys, node.head, msg, self.params, self.dag)
        e = Event(self.now, self._event.seq, PROTOCOL_MSG, node.index, {"msg": msg})
        self._decide(node, e, prescribed)

    def _on_protocol_msg(self, ev: Event, rec: EventRecord):
        node = self.nodes[ev.node]
        msg = ev.payload["msg"]
        rec.block = msg.block
        self._set("msg", [msg.kind, msg.key, msg.round])
        if node.protocol_local is None:
            return
        self._receive(node, msg)

    def _on_timeout(self, ev: Event, rec: EventRecord):
        node = self.nodes[ev.node]
        st = node.protocol_local
        p = ev.payload
        if st is None or p["token"] != node.timer_token or p["round"] != st.round:
            return False
        self._set("round", st.round)
        actions = ibft_on_timeout(st, node.keys, st.round)
        node.timer_token += 1
        self.queue.push(self.now + self.params.round_timeout, ROUND_TIMEOUT, node.index,
                        {"round": st.round, "token": node.timer_token})
        self._decide(node, ev, actions)

    def _propose(self, node: NodeState, a: Propose) -> None:
        if a.reuse is not None:
            bid = a.reuse
        else:
            strat = self.strategies[node.index]
            txs = select_txs(node.mempool if a.parent == node.head else {},
                             self.params.max_txs_per_block)
            txs = strat.filter_txs(txs, self.txs)
            bid = self._new_block(a.parent, node.index, 1.0, txs,
                                  {"key": a.key, "round": a.round}).id
        self._broadcast(node, IbftMessage(PROPOSAL, a.key, a.round, bid))

    def _finalize(self, node: NodeState, b: int) -> None:
        st = node.protocol_local
        if b in st.finalized:
            return
        self._add_view(node, b)
        st.finalized.add(b)
        self._note("fin", b)
        self._adopt(node, b)
        self._gossip(node, b, None, 0.0)

    def _advance(self, node: NodeState, r: int) -> None:
        st = node.protocol_local
        if r > st.round:
            self._note("adv", r)
            self._start_round(node, r)
            node.messages = {m for m in node.messages if m.round >= r - 1}
        self._decide(node, self._event, ibft_after_head_change(st, node.keys, node.head,
                                                               self.params, self.dag))

    def _ibft_sync(self, node: NodeState, ev: Event):
        """A keyed node catching up on blocks finalized while it was cut off."""
        b = ev.payload["block"]
        st = node.protocol_local
        if node.crashed or st is None:
            return False
        dag = self.dag
        if b in st.finalized or dag.height(b) <= dag.height(node.head):
            self._set("dup", True)
            return
        if dag.blocks[b].parent != node.head:
            node.pending.setdefault(dag.blocks[b].parent, []).append(ev)
            self._set("buffered", True)
            return
        while True:
            self._finalize(node, b)
            r = (dag.blocks[b].payload or {}).get("round", st.round)
            self._advance(node, max(st.round, r + 1))
            waiting = node.pending.pop(b, None)
            nxt = [w.payload["block"] for w in (waiting or ()) if dag.blocks[w.payload["block"]].parent == node.head]
            if not nxt:
                return
            b = nxt[0]


def run(scenario: Union[ScenarioConfig, dict], horizon: Optional[float] = None,
        seed: int = 0) -> Trace:
    cfg = scenario if isinstance(scenario, ScenarioConfig) else from_dict(scenario)
    return Simulator(cfg, seed).run(horizon)


def snapshot(sim: Simulator, t: Optional[float] = None) -> SystemState:
    return sim.snapshot(t)


def on_block_arrival(sim: Simulator, node: int, b: int, sender: Optional[int] = None) -> NodeState:
    """Inject one block arrival into a live simulator and process it now."""
    ev = Event(sim.now, sim.queue.next_seq(), BLOCK_ARRIVAL, node,
               {"block": b, "sender": sender, "rush": 0.0})
    rec = EventRecord(ev.time, ev.seq, ev.kind, node)
    sim._rec, sim._event = rec, ev
    sim._on_block_arrival(ev, rec)
    sim.records.append(rec)
    return sim.nodes[node]

