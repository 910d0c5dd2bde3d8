"""Growth fits and report writers (JSON lines, CSV, SVG)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class GrowthFit:
    """value ~ scale^a and value ~ (log scale)^b, both by least squares in log coordinates."""

    scales: tuple
    values: tuple
    a: float
    a_intercept: float
    power_residual: float
    b: float
    b_intercept: float
    polylog_residual: float

    @property
    def better(self):
        return "polylog" if self.polylog_residual < self.power_residual else "power"

    def as_dict(self):
        return {
            "a": self.a,
            "a_intercept": self.a_intercept,
            "b": self.b,
            "b_intercept": self.b_intercept,
            "better": self.better,
            "polylog_residual": self.polylog_residual,
            "power_residual": self.power_residual,
            "samples": len(self.scales),
        }


def _line_fit(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(coef[1]), float(np.linalg.norm(A @ coef - y))


def fit_growth(samples) -> GrowthFit:
    """Fit (scale, value) pairs; needs at least 4 samples with strictly increasing scales > 1."""
    pts = [(float(s), float(v)) for s, v in samples]
    if len(pts) < 4:
        raise ValueError("fit_growth needs at least 4 samples")
    s = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(np.diff(s) <= 0):
        raise ValueError("scales must be strictly increasing")
    if np.any(s <= 1) or np.any(v <= 0):
        raise ValueError("scales must exceed 1 and values must be positive")
    ls = np.log(s)
    lv = np.log(v)
    a, a0, ra = _line_fit(ls, lv)
    b, b0, rb = _line_fit(np.log(ls), lv)
    return GrowthFit(tuple(s), tuple(v), a, a0, ra, b, b0, rb)


def power_exponent(scales, values):
    """Least-squares slope of log value against log scale (two or more samples)."""
    s = np.log(np.asarray(scales, dtype=float))
    v = np.log(np.asarray(values, dtype=float))
    if s.size < 2:
        raise ValueError("need at least two samples")
    return _line_fit(s, v)[0]


# ---------------------------------------------------------------- serialisation


def clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        f = float(value)
        return f if math.isfinite(f) else ("inf" if f > 0 else "-inf" if f < 0 else "nan")
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


def dumps(record):
    return json.dumps(clean(record), sort_keys=True, separators=(",", ":"))


def write_jsonl(path, header, rows, summary):
    path = Path(path)
    with path.open("w") as fh:
        fh.write(dumps({"kind": "header", **header}) + "\n")
        for r in rows:
            fh.write(dumps({"kind": "row", **r}) + "\n")
        fh.write(dumps({"kind": "summary", **summary}) + "\n")
    return path


def read_jsonl(path):
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path, rows):
    path = Path(path)
    cols = sorted({k for r in rows for k in r})
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: clean(r.get(k, "")) for k in cols})
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def plot_csv(csv_path, svg_path, x, y, group=None, logx=True, logy=True, title=None):
    """Scatter/line plot of column y against column x, one series per value of ``group``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "decoupling-lab"
    rows = [r for r in read_csv(csv_path) if r.get(x) not in ("", None) and r.get(y) not in ("", None)]
    series = {}
    for r in rows:
        series.setdefault(r.get(group, "") if group else "", []).append((float(r[x]), float(r[y])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(series):
        pts = sorted(series[name])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=name or y)
    if logx:
        ax.set_xscale("log", base=2)
    if logy and all(p[1] > 0 for pts in series.values() for p in pts):
        ax.set_yscale("log")
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(svg_path)
