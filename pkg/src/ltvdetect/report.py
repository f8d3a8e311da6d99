"""Schema-versioned JSON reports and CSV curve files."""

from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"
TOOL = "ltvdetect"


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays unwrapped, non-finite floats as ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def build_report(command: str, result: dict, *, system: dict, config: dict, seed: int,
                 status: str = "completed") -> dict:
    """Report body; everything except ``metadata`` is a pure function of the inputs."""
    return _clean({
        "schema_version": SCHEMA_VERSION,
        "tool": TOOL,
        "command": command,
        "status": status,
        "seed": seed,
        "system": system,
        "config": config,
        "result": result,
        "metadata": {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")},
    })


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(path, report: dict) -> Path:
    path = Path(path)
    path.write_text(dumps(report))
    return path


def strip_metadata(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "metadata"}


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("report.schema.json").read_text())
