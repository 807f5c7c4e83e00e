"""Run records and their CSV / JSON serialization."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_PARSE = 2
EXIT_PRECONDITION = 3
EXIT_BUDGET = 4


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    output: str | None = None
    fmt: str = "json"
    version: str = __version__


@dataclass
class RunReport:
    config: RunConfig
    payload: object = None
    status: str = "ok"
    wall_time: float = 0.0
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"config": dataclasses.asdict(self.config), "status": self.status,
                "wall_time": self.wall_time, "warnings": self.warnings,
                "payload": self.payload}


def jsonable(obj):
    """Recursively convert dataclasses and numpy values to plain JSON types."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return jsonable(obj.to_dict())
        return jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def to_json(report: RunReport) -> str:
    return json.dumps(jsonable(report.to_dict()), indent=2, sort_keys=True) + "\n"


def to_csv(rows: list[dict], extra: dict | None = None) -> str:
    """RFC-4180 CSV; ``extra`` columns (seed, budgets, version) repeat on every row."""
    rows = [dict(jsonable(r), **(extra or {})) for r in rows]
    buf = io.StringIO()
    if not rows:
        return ""
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [k for k in r if k not in cols]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()})
    return buf.getvalue()


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
