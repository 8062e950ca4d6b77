"""CSV and JSON writers.

CSV files open with ``#`` comment lines carrying the artifact version, the
master seed and a hash of the resolved config.  Nothing time-dependent goes
into a CSV, so rerunning a manifest reproduces the files byte for byte.
Timestamps live only in the JSON manifest.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from datetime import datetime, timezone

from . import __version__

SCHEMA_VERSION = 1

RECORD_COLUMNS = ("iter", "mean_reward", "probe_reward", "kl_fwd", "kl_rev", "ratio_min",
                  "ratio_max", "clip_inactive_frac")
SWEEP_COLUMNS = ("n", "surrogate", "policy", "converged", "total", "fraction", "ci_low", "ci_high")
LEDGER_COLUMNS = ("k", "eta", "lhs", "rhs", "holds")
DIAGNOSE_COLUMNS = ("action", "reward", "ratio", "score_norm", "weighting", "grad_contrib")
LANDSCAPE_COLUMNS = ("action", "mean_reward")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v)
    if hasattr(v, "item"):  # numpy scalar
        return fmt(v.item())
    return str(v)


def write_csv(path, columns, rows, seed: int, config: dict, extra: dict | None = None):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# artifact_version={__version__}\n")
        fh.write(f"# seed={seed}\n")
        fh.write(f"# config_hash={config_hash(config)}\n")
        for k, v in (extra or {}).items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(row[c]) for c in columns])


def read_csv(path) -> tuple[dict, list[dict]]:
    """(header comments as a dict, rows as dicts of strings)."""
    meta, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            else:
                lines.append(line)
    return meta, list(csv.DictReader(lines))


def record_rows(records):
    for r in records:
        yield {"iter": r.iteration, "mean_reward": r.reward_mean, "probe_reward": r.probe_reward,
               "kl_fwd": r.kl_fwd, "kl_rev": r.kl_rev, "ratio_min": r.ratio_min,
               "ratio_max": r.ratio_max, "clip_inactive_frac": r.clip_inactive_frac}


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, *, config: dict, seed: int, started: str, files: list[str],
                   verdict: dict, extra: dict | None = None):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "artifact_version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "started": started,
        "finished": now_iso(),
        "files": files,
        "verdict": verdict,
    }
    if extra:
        doc.update(extra)
    write_json(path, doc)
    return doc


def write_json(path, doc):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")
