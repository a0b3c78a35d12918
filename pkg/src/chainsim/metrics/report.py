"""Collected metric results with provenance, as rows or a JSON document."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass
class MetricEntry:
    metric: str
    value: Any
    unit: str = ""
    stderr: Optional[float] = None
    source: str = ""
    seed: Optional[int] = None


@dataclass
class MetricsReport:
    entries: list = field(default_factory=list)

    def add(self, metric: str, value, unit: str = "", stderr=None, source: str = "",
            seed=None) -> MetricEntry:
        if not source:
            raise ValueError("every metric entry names its source trace")
        e = MetricEntry(metric, value, unit, stderr, source, seed)
        self.entries.append(e)
        return e

    def rows(self) -> list[dict]:
        return [{"metric": e.metric, "value": _plain(e.value), "unit": e.unit,
                 "stderr": "" if e.stderr is None else e.stderr,
                 "source": e.source, "seed": "" if e.seed is None else e.seed}
                for e in self.entries]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["metric", "value", "unit", "stderr", "source", "seed"],
                           lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            row = dict(row)
            if not isinstance(row["value"], (int, float, str)):
                row["value"] = json.dumps(row["value"], sort_keys=True)
            w.writerow(row)
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"schema": "chainsim-report/1", "entries": self.rows()},
                          indent=2, sort_keys=True)


def _plain(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, set, frozenset)):
        return [_plain(x) for x in (sorted(v) if isinstance(v, (set, frozenset)) else v)]
    if hasattr(v, "_asdict"):
        return _plain(v._asdict())
    if hasattr(v, "__dataclass_fields__"):
        return {k: _plain(getattr(v, k)) for k in v.__dataclass_fields__}
    return v
