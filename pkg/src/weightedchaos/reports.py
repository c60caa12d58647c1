"""Deterministic JSON/CSV reports and run manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
import sys
from dataclasses import asdict, dataclass, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__


@dataclass
class Check:
    """One asserted invariant; `tag` names the property it instantiates."""
    name: str
    tag: str
    passed: bool
    value: float | None = None
    bound: float | None = None
    detail: str = ""

    def message(self) -> str:
        s = f"{'PASS' if self.passed else 'FAIL'} {self.name} [{self.tag}]"
        if self.value is not None:
            s += f" value={self.value:.6g}"
        if self.bound is not None:
            s += f" bound={self.bound:.6g}"
        if self.detail:
            s += f" {self.detail}"
        return s


def plain(obj):
    """Convert numpy scalars/arrays, dataclasses and tuples to JSON-able values.
    Non-finite floats become the strings "inf", "-inf", "nan"."""
    if is_dataclass(obj) and not isinstance(obj, type):
        return plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


def canonical_json(obj) -> str:
    return json.dumps(plain(obj), sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(identity: dict) -> str:
    return hashlib.sha256(canonical_json(identity).encode()).hexdigest()


def _csv_text(rows: list) -> str:
    buf = io.StringIO()
    if rows:
        cols = []
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in plain(r).items()})
    return buf.getvalue()


def versions() -> dict:
    from importlib.metadata import PackageNotFoundError, version

    def ver(name):
        try:
            return version(name)
        except PackageNotFoundError:
            return "unknown"

    return {"weightedchaos": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": ver("scipy"), "jsonschema": ver("jsonschema")}


def emit_report(subcommand: str, identity: dict, results: dict, checks: list, table: list,
                out_dir, seed: int, wall_time: float, extra: dict | None = None) -> dict:
    """Write {subcommand}-{hash}.json and .csv plus a manifest; return the paths.
    `extra` maps a suffix to rows written as {subcommand}-{hash}-{suffix}.csv.

    The report depends only on the config identity and the computed results,
    never on timing or worker count. Wall time and versions go to the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(identity)
    report = {"subcommand": subcommand, "config_hash": h, "seed": seed, "config": identity,
              "passed": all(c.passed for c in checks),
              "checks": [asdict(c) for c in checks], "results": results}
    stem = f"{subcommand}-{h}"
    paths = {"json": out / f"{stem}.json", "csv": out / f"{stem}.csv",
             "manifest": out / f"manifest-{stem}.json"}
    paths["json"].write_text(json.dumps(plain(report), sort_keys=True, indent=2) + "\n")
    paths["csv"].write_text(_csv_text(table))
    for suffix, rows in sorted((extra or {}).items()):
        paths[suffix] = out / f"{stem}-{suffix}.csv"
        paths[suffix].write_text(_csv_text(rows))
    manifest = {"subcommand": subcommand, "config_hash": h, "seed": seed,
                "versions": versions(), "wall_time_s": wall_time,
                "argv": sys.argv[1:], "files": {k: v.name for k, v in paths.items() if k != "manifest"}}
    paths["manifest"].write_text(json.dumps(plain(manifest), sort_keys=True, indent=2) + "\n")
    return paths


def validate_report(report: dict, kind: str = "report"):
    """Validate a parsed report (kind "report") or manifest (kind "manifest")
    against the packaged schema; raises jsonschema.ValidationError."""
    import jsonschema
    from .config import load_schema
    jsonschema.validate(report, load_schema(f"{kind}.schema.json"))
