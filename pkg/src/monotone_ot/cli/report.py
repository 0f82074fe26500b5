"""Writing reports: JSON with provenance, CSV tables, PNG figures and a timing sidecar."""
from __future__ import annotations

import csv
import datetime
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from .config import ExperimentConfig

SCHEMA = 1
OUTPUT_DIR_ENV = "MONOTONE_OT_OUTPUT_DIR"


def clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


def resolve_output(cfg: ExperimentConfig) -> Path:
    """Requested path, or <dir>/<command>-<hash>.json; existing files get a numbered sibling unless forced."""
    if cfg.out:
        path = Path(cfg.out)
    else:
        base = Path(os.environ.get(OUTPUT_DIR_ENV) or ".")
        path = base / f"{cfg.command}-{cfg.hash[:12]}.json"
    if not cfg.force:
        stem, suffix = path.with_suffix(""), path.suffix or ".json"
        k = 1
        candidate = path
        while candidate.exists():
            candidate = Path(f"{stem}-{k}{suffix}")
            k += 1
        path = candidate
    return path


def build_report(cfg: ExperimentConfig, result) -> dict:
    return clean({
        "schema": SCHEMA,
        "version": __version__,
        "command": cfg.command,
        "config": cfg.to_json(),
        "config_hash": cfg.hash,
        "passed": not result.failures,
        "failures": list(result.failures),
        "result": result.report,
    })


def _write_csv(path: Path, rows):
    fields = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: clean(v) for k, v in r.items()})


def _write_png(path: Path, draw):
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    fig = plt.figure(figsize=(6, 4.5))
    try:
        draw(fig)
        fig.tight_layout()
        fig.savefig(path, dpi=110, metadata={"Software": None})
    finally:
        plt.close(fig)


def write_outputs(cfg: ExperimentConfig, result, started: datetime.datetime, duration: float, argv=None) -> dict:
    """Write every artifact; returns the paths written."""
    path = resolve_output(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    report = build_report(cfg, result)
    with open(path, "w") as f:
        json.dump(report, f, sort_keys=True, indent=2)
        f.write("\n")
    stem = path.with_suffix("")
    written = {"report": str(path)}
    for name, rows in result.tables.items():
        p = Path(f"{stem}.{name}.csv")
        _write_csv(p, rows)
        written[f"csv:{name}"] = str(p)
    for name, draw in result.plots.items():
        p = Path(f"{stem}.{name}.png")
        _write_png(p, draw)
        written[f"png:{name}"] = str(p)
    meta = {
        "report": path.name,
        "started": started.isoformat(),
        "duration_s": duration,
        "argv": list(sys.argv if argv is None else argv),
        "python": sys.version.split()[0],
        "artifacts": {k: Path(v).name for k, v in written.items()},
    }
    with open(f"{stem}.meta.json", "w") as f:
        json.dump(meta, f, sort_keys=True, indent=2)
        f.write("\n")
    written["meta"] = f"{stem}.meta.json"
    return written
