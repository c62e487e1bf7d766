"""Plain-text artifacts: trajectory CSV, switch-event CSV and canonical JSON."""

from __future__ import annotations

import io
import json
import math
from pathlib import Path

import numpy as np


def _num(v) -> str:
    return "%.17g" % float(v)


def trajectory_csv(t, x) -> str:
    """Header ``t,x1,...,xN`` then one row per sample, 17 significant digits."""
    x = np.asarray(x, dtype=float)
    buf = io.StringIO()
    buf.write(",".join(["t"] + [f"x{i + 1}" for i in range(x.shape[1])]) + "\n")
    for ti, xi in zip(t, x):
        buf.write(",".join([_num(ti)] + [_num(v) for v in xi]) + "\n")
    return buf.getvalue()


def events_csv(events) -> str:
    """``t,from,to`` with 1-based strategies; sets are joined by ``+``."""
    def label(s):
        return "+".join(str(i + 1) for i in sorted(s))

    lines = ["t,from,to"]
    lines += [f"{_num(e.t)},{label(e.old)},{label(e.new)}" for e in events]
    return "\n".join(lines) + "\n"


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        # JSON has no inf/nan; keep them readable and stable
        return v if math.isfinite(v) else str(v)
    return obj


def canonical_json(obj) -> str:
    """Sorted keys, fixed indentation, trailing newline: byte-stable for equal input."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_text(path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)
    return p
