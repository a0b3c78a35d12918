"""Command line front end: run, sweep, metrics, replay and report.

Exit codes are a stable contract: 0 success, 2 config or usage error,
3 internal invariant violation, 4 replay mismatch.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import metrics as M
from .config import ConfigInvalid, ScenarioConfig, from_dict, load
from .simnet import InvariantViolation, Trace, ZeroTotalResource, run, verify_lines

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVARIANT = 3
EXIT_MISMATCH = 4


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    """What was run and where it went; the digest pins the exact config."""

    digest: str
    seeds: list
    metrics: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    command: str = ""

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        self.outputs.append(str(path))
        return path


# -- metric registry --

def _liveness_bound(cfg: ScenarioConfig) -> float:
    if cfg.protocol == "ibft":
        return 5.0 * cfg.ibft.round_timeout
    n = cfg.nakamoto
    return 3.0 * n.mean_block_interval * (n.confirmations + 1)


def _message_complexity(trace):
    try:
        return M.message_complexity(trace).per_decision
    except M.NoFinalizedBlocks:
        return math.nan


def _fairness(trace):
    try:
        return M.fairness_measure(trace).epsilon
    except M.ZeroRewards:
        return math.nan


def _hhi(trace):
    try:
        return M.hhi(trace.final_state, 0)
    except ZeroTotalResource:
        return math.nan


def _persistence(mode):
    def f(trace):
        if trace.horizon <= 0:
            return M.INCONCLUSIVE
        return M.persistence_check(trace, M.HEADS_CONSISTENT, 0.0, mode)
    return f


TRACE_METRICS: dict[str, tuple[Callable, str]] = {
    "chain_length": (lambda t: len(t.reference_chain()) - 1, "blocks"),
    "forks": (lambda t: len(M.detect_forks(t)), "count"),
    "fork_intervals": (lambda t: [[f.start, f.end] for f in M.detect_forks(t)], "s"),
    "overturns": (lambda t: len(M.detect_overturns(t)), "count"),
    "orphans": (lambda t: len(M.detect_orphans(t.final_state)), "count"),
    "safety": (lambda t: len(M.audit_safety(t)), "violations"),
    "agreement": (lambda t: len(M.audit_agreement(t)), "violations"),
    "liveness": (lambda t: len(M.audit_liveness(t, _liveness_bound(t.config))), "faults"),
    "throughput": (lambda t: M.throughput(t) if t.horizon > 0 else 0.0, "tx/s"),
    "message_complexity": (_message_complexity, "msgs/decision"),
    "fairness": (_fairness, "epsilon"),
    "hhi": (_hhi, "hhi"),
    "persistence_weak": (_persistence(M.WEAK), "verdict"),
    "persistence_strong": (_persistence(M.STRONG), "verdict"),
}
# metrics that take numbers from the command line instead of a trace
INPUT_METRICS = ("hhi", "pivotality")
DEFAULT_METRICS = ["chain_length", "forks", "overturns", "orphans", "safety", "liveness",
                   "throughput", "message_complexity"]


def _check_metrics(names: list[str], allow_inputs: bool = False) -> None:
    known = set(TRACE_METRICS) | (set(INPUT_METRICS) if allow_inputs else set())
    bad = [n for n in names if n not in known]
    if bad:
        raise UsageError(f"unknown metric {', '.join(bad)}; available: {', '.join(sorted(known))}")


def evaluate(trace: Trace, names: list[str]) -> dict:
    return {name: TRACE_METRICS[name][0](trace) for name in names}


# -- workers --

def _workers(jobs: int) -> int:
    cap = os.environ.get("PRESTO_SIM_THREADS")
    limit = os.cpu_count() or 1
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise UsageError(f"PRESTO_SIM_THREADS must be an integer, got {cap!r}") from None
    return max(1, min(limit, jobs))


def _job(data: dict, seed: int, horizon: Optional[float], names: list[str],
         trace_path: Optional[str]) -> dict:
    trace = run(from_dict(data), horizon, seed)
    out = {"seed": seed, "digest": trace.digest, "checksum": trace.checksum(),
           "events": len(trace.events), "blocks": len(trace.dag) - 1,
           "heads": trace.final_state.heads(), "metrics": evaluate(trace, names)}
    if trace_path:
        trace.write(trace_path)
        out["trace"] = trace_path
    return out


def _map(jobs: list[tuple]) -> list[dict]:
    n = _workers(len(jobs))
    if n == 1:
        return [_job(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_job, *zip(*jobs)))


# -- helpers --

def _seed_list(args) -> list[int]:
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    return list(range(args.seed, args.seed + args.seeds))


def _out_dir(args) -> Optional[Path]:
    if not args.out:
        return None
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load(args) -> ScenarioConfig:
    if not args.config:
        raise UsageError("--config is required")
    try:
        return load(args.config)
    except OSError as e:
        raise UsageError(f"cannot read config: {e}") from None


def _parse_values(text: str) -> list:
    vals = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            vals.append(json.loads(part))
        except json.JSONDecodeError:
            vals.append(part)
    return vals


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of numbers") from None


def _csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()})
    return buf.getvalue()


def _mean_se(xs: list[float]) -> tuple[float, float]:
    xs = [x for x in xs if isinstance(x, (int, float)) and not math.isnan(x)]
    if not xs:
        return math.nan, math.nan
    m = sum(xs) / len(xs)
    if len(xs) < 2:
        return m, 0.0
    var = sum((x - m) ** 2 for x in xs) / (len(xs) - 1)
    return m, math.sqrt(var / len(xs))


# -- axis handling --

def apply_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    """Copy of `cfg` with the dotted field `axis` set to `value`.

    `ibft.k` also rebuilds the validator set: node i < k holds key i and
    every unkeyed node is kept as an observer.
    """
    data = copy.deepcopy(cfg.to_dict())
    if axis == "ibft.k":
        if data.get("protocol") != "ibft":
            raise UsageError("axis ibft.k needs an ibft config")
        if not isinstance(value, int) or value < 1:
            raise UsageError(f"ibft.k must be a positive integer, got {value!r}")
        template = next((n for n in data["nodes"] if n.get("keys")), {})
        observers = [n for n in data["nodes"] if not n.get("keys")]
        nodes = []
        for i in range(value):
            node = copy.deepcopy(template)
            node.update({"keys": [i], "name": str(i), "crashed": False, "strategy": "default"})
            nodes.append(node)
        for j, o in enumerate(observers):
            o["name"] = f"obs{j}"
        data["nodes"] = nodes + observers
        data["ibft"]["k"] = value
        data["ibft"].pop("rotation", None)
        data["observer"] = 0
        return from_dict(data)
    parts = axis.split(".")
    cur = data
    for p in parts[:-1]:
        if not isinstance(cur, dict) or p not in cur or not isinstance(cur[p], dict):
            raise UsageError(f"bad axis {axis!r}")
        cur = cur[p]
    if not isinstance(cur, dict) or parts[-1] not in cur:
        raise UsageError(f"bad axis {axis!r}")
    cur[parts[-1]] = value
    try:
        return from_dict(data)
    except ConfigInvalid as e:
        raise UsageError(f"axis {axis}={value!r}: {e}") from None


# -- subcommands --

def cmd_run(args) -> int:
    cfg = _load(args)
    seeds = _seed_list(args)
    out = _out_dir(args)
    names = args.metric or []
    _check_metrics(names)
    jobs = []
    for s in seeds:
        path = str(out / f"trace-{cfg.digest()[:12]}-s{s}.jsonl") if out else None
        jobs.append((cfg.to_dict(), s, args.horizon, names, path))
    results = _map(jobs)
    summary = {"digest": cfg.digest(), "runs": results}
    text = json.dumps(summary, indent=2, sort_keys=True, default=str)
    if out:
        (out / "summary.json").write_text(text + "\n")
        m = RunManifest(cfg.digest(), seeds, names,
                        [r["trace"] for r in results] + [str(out / "summary.json")], "run")
        m.write(out)
    print(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not args.axis or args.values is None:
        raise UsageError("sweep needs --axis and --values")
    values = _parse_values(args.values)
    if len(values) < 2:
        raise UsageError("sweep needs at least 2 axis values")
    names = args.metric or ["throughput"]
    _check_metrics(names)
    seeds = _seed_list(args)
    configs = [apply_axis(cfg, args.axis, v) for v in values]
    jobs = [(c.to_dict(), s, args.horizon, names, None) for c in configs for s in seeds]
    results = iter(_map(jobs))
    rows = []
    for v, c in zip(values, configs):
        per_seed = []
        for s in seeds:
            r = next(results)
            per_seed.append(r)
            rows.append({"axis": args.axis, "value": v, "row": "seed", "seed": s,
                         "digest": r["digest"], **r["metrics"]})
        agg = {"axis": args.axis, "value": v, "row": "mean", "seed": ",".join(map(str, seeds)),
               "digest": c.digest()}
        for name in names:
            m, se = _mean_se([r["metrics"][name] for r in per_seed])
            agg[name] = m
            agg[f"{name}_se"] = se
        rows.append(agg)
    columns = ["axis", "value", "row", "seed", "digest"]
    for name in names:
        columns += [name, f"{name}_se"]
    text = _csv(rows, columns)
    out = _out_dir(args)
    if out:
        (out / "sweep.csv").write_text(text)
        (out / "sweep.json").write_text(json.dumps(rows, indent=2, default=str) + "\n")
        RunManifest(cfg.digest(), seeds, names,
                    [str(out / "sweep.csv"), str(out / "sweep.json")], "sweep").write(out)
    sys.stdout.write(text)
    return EXIT_OK


def _read_trace(path: str) -> Trace:
    try:
        return Trace.read(path)
    except OSError as e:
        raise UsageError(f"cannot read trace: {e}") from None
    except (ValueError, KeyError) as e:
        raise UsageError(f"{path}: not a readable trace ({e})") from None


def _input_metrics(args, names: list[str], report: M.MetricsReport) -> None:
    if "hhi" in names and args.shares:
        report.add("hhi", M.hhi_from_shares(_parse_floats(args.shares, "--shares")),
                   "hhi", source="--shares")
    if "pivotality" in names:
        if not args.weights or args.threshold is None:
            raise UsageError("pivotality needs --weights and --threshold")
        w = _parse_floats(args.weights, "--weights")
        try:
            counts = M.pivotality(w, args.threshold)
        except ValueError as e:
            raise UsageError(str(e)) from None
        report.add("pivotality", counts, "coalitions", source="--weights")


def _state_file_metrics(path: str, names: list[str], report: M.MetricsReport) -> None:
    data = json.loads(Path(path).read_text())
    if "hhi" in names:
        if "shares" in data:
            report.add("hhi", M.hhi_from_shares(data["shares"]), "hhi", source=path)
        elif "resources" in data:
            report.add("hhi", M.hhi(data["resources"]), "hhi", source=path)
    if "pivotality" in names and "weights" in data:
        report.add("pivotality", M.pivotality(data["weights"], data.get("threshold", 0.51)),
                   "coalitions", source=path)


def _is_trace(path: str) -> bool:
    with open(path, encoding="utf-8") as f:
        first = f.readline()
    try:
        return json.loads(first).get("schema", "").startswith("chainsim-trace/")
    except (json.JSONDecodeError, AttributeError):
        return False


def build_report(paths: list[str], names: list[str], args=None) -> M.MetricsReport:
    report = M.MetricsReport()
    if args is not None:
        _input_metrics(args, names, report)
    for p in paths:
        try:
            is_trace = _is_trace(p)
        except OSError as e:
            raise UsageError(f"cannot read {p}: {e}") from None
        if not is_trace:
            try:
                _state_file_metrics(p, names, report)
            except (json.JSONDecodeError, ValueError) as e:
                raise UsageError(f"{p}: {e}") from None
            continue
        trace = _read_trace(p)
        for name in names:
            if name == "pivotality":
                continue
            fn, unit = TRACE_METRICS[name]
            report.add(name, fn(trace), unit, source=f"{p}#{trace.digest[:12]}", seed=trace.seed)
    return report


def _emit(report: M.MetricsReport, out: Optional[Path], stem: str) -> list[str]:
    paths = []
    if out:
        for ext, text in (("csv", report.to_csv()), ("json", report.to_json())):
            p = out / f"{stem}.{ext}"
            p.write_text(text)
            paths.append(str(p))
    sys.stdout.write(report.to_csv())
    return paths


def cmd_metrics(args) -> int:
    names = args.metric or DEFAULT_METRICS
    _check_metrics(names, allow_inputs=True)
    if not args.traces and not (args.shares or args.weights):
        raise UsageError("give trace or state files, or --shares / --weights")
    report = build_report(args.traces, names, args)
    _emit(report, _out_dir(args), "metrics")
    return EXIT_OK


def cmd_report(args) -> int:
    names = args.metric or sorted(TRACE_METRICS)
    _check_metrics(names, allow_inputs=True)
    paths = list(args.traces)
    out = _out_dir(args)
    if args.config:
        cfg = _load(args)
        seeds = _seed_list(args)
        tmp = out or Path(".")
        jobs = [(cfg.to_dict(), s, args.horizon, [], str(tmp / f"trace-{cfg.digest()[:12]}-s{s}.jsonl"))
                for s in seeds]
        paths += [r["trace"] for r in _map(jobs)]
    if not paths:
        raise UsageError("report needs trace files or --config")
    report = build_report(paths, names, args)
    written = _emit(report, out, "report")
    if out:
        digests = sorted({e.source.split("#")[-1] for e in report.entries})
        seeds = sorted({e.seed for e in report.entries if e.seed is not None})
        RunManifest(",".join(digests), seeds, names, written, "report").write(out)
    return EXIT_OK


def replay_verdict(path: str) -> tuple[bool, str]:
    """Re-run the scenario embedded in a trace file and compare byte for byte."""
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        return False, "empty trace file"
    try:
        header = json.loads(lines[0])
        cfg = from_dict(header["scenario"])
        seed, horizon = header["seed"], header["horizon"]
    except (json.JSONDecodeError, KeyError, TypeError, ConfigInvalid) as e:
        return False, f"unusable header: {e}"
    if not verify_lines(lines):
        return False, "footer checksum does not match file contents"
    if cfg.digest() != header.get("digest"):
        return False, "scenario digest does not match header"
    fresh = run(cfg, horizon, seed)
    if fresh.dumps().splitlines() != lines:
        return False, "re-run differs from recorded trace"
    return True, fresh.checksum()


def cmd_replay(args) -> int:
    if not args.traces:
        raise UsageError("replay needs a trace file")
    status = EXIT_OK
    for p in args.traces:
        try:
            ok, detail = replay_verdict(p)
        except OSError as e:
            raise UsageError(f"cannot read trace: {e}") from None
        print(f"{p}: {'ok' if ok else 'mismatch'} ({detail})")
        if not ok:
            status = EXIT_MISMATCH
    return status


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario config (JSON)")
    common.add_argument("--seed", type=int, default=0, help="first seed")
    common.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    common.add_argument("--horizon", type=float, default=None, help="override horizon in seconds")
    common.add_argument("--out", help="output directory")
    common.add_argument("--metric", action="append", help="metric name (repeatable)")

    p = argparse.ArgumentParser(prog="chainsim", description="Blockchain consensus simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate and write traces")
    sw = sub.add_parser("sweep", parents=[common], help="vary one config field")
    sw.add_argument("--axis", help="dotted config field, e.g. ibft.k")
    sw.add_argument("--values", help="comma-separated values")
    for name, helptext in (("metrics", "compute metrics from traces or state files"),
                           ("report", "full metric report to CSV and JSON")):
        m = sub.add_parser(name, parents=[common], help=helptext)
        m.add_argument("traces", nargs="*")
        m.add_argument("--shares", help="market shares in percent, for hhi")
        m.add_argument("--weights", help="voting weights, for pivotality")
        m.add_argument("--threshold", type=float, help="winning threshold, for pivotality")
    r = sub.add_parser("replay", help="re-run a trace and compare")
    r.add_argument("traces", nargs="+")
    return p


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "metrics": cmd_metrics,
            "report": cmd_report, "replay": cmd_replay}


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigInvalid) as e:
        print(f"chainsim: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as e:
        print(f"chainsim: invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
