"""Output helpers: sanitized JSON, fixed-header CSV and matplotlib figures.

CSV files use '.' as decimal separator and ``repr``-precision floats; the
column headers of each table are fixed in :data:`CSV_HEADERS`.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

CSV_HEADERS = {
    "trajectories": ["trajectory", "steps_done", "diverged", "construction_point_fraction",
                     "construction_point_fraction_mod3", "empty_at_end",
                     "empty_buffer_count_at_end", "mean_total_queue", "max_total_queue",
                     "drift_slope", "return_time_sum", "return_count"],
    "words": ["word", "length", "probability"],
    "comparison": ["word", "length", "reference", "oracle", "abs_diff"],
    "conditions": ["condition", "holds", "status", "margin", "witness", "note"],
    "kidney": ["mu", "trajectorial_average", "av_eb", "av_eb_third", "av_eb_step",
               "construction_point_fraction_mod3", "zero_coordinates_at_end", "pi0_two_by_two",
               "diverged", "trajectories", "steps"],
    "deviation": ["n", "seed", "deviation"],
    "coefficients": ["kind", "key", "node", "value"],
}


def sanitize(obj):
    """JSON-safe copy: non-finite floats become None, Fractions floats,
    tuples lists, numpy scalars Python scalars."""
    if isinstance(obj, dict):
        return {str(k) if not isinstance(k, tuple) else " ".join(map(str, k)): sanitize(v)
                for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [sanitize(v) for v in items]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(sanitize(obj), indent=2, allow_nan=False)


def _fmt(v):
    if isinstance(v, (float, np.floating, Fraction)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return ""
    return str(v)


def write_csv(path, table: str, rows) -> Path:
    """Write ``rows`` (dicts) under the fixed header of ``table``."""
    path = Path(path)
    header = CSV_HEADERS[table]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(k)) for k in header])
    return path


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj) + "\n")
    return path


def digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def word_label(w) -> str:
    """``"empty"``, a word such as ``"131"``, or ``"(1,0,2)"`` for class counts."""
    if not w:
        return "empty"
    if not isinstance(w[0], str):
        return "(" + ",".join(str(int(v)) for v in w) + ")"
    return "".join(w) if all(len(a) == 1 for a in w) else " ".join(w)


# figures

def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    _plt().close(fig)
    return path


def plot_word_probabilities(entries: dict, path, top: int = 25, other: dict | None = None,
                            labels=("closed form", "oracle")):
    """Bar chart of the ``top`` most likely states (two series if ``other``)."""
    plt = _plt()
    items = sorted(entries.items(), key=lambda kv: -float(kv[1]))[:top]
    xs = np.arange(len(items))
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(items)), 4))
    width = 0.4 if other is not None else 0.8
    ax.bar(xs - (width / 2 if other is not None else 0), [float(v) for _, v in items], width,
           label=labels[0])
    if other is not None:
        ax.bar(xs + width / 2, [float(other.get(k, 0.0)) for k, _ in items], width,
               label=labels[1])
        ax.legend()
    ax.set_xticks(xs)
    ax.set_xticklabels([word_label(k) if isinstance(k, tuple) else str(k) for k, _ in items],
                       rotation=60, fontsize=8)
    ax.set_ylabel("probability")
    return _save(fig, path)


def plot_sample_path(counts: np.ndarray, nodes, path, times=None, title=""):
    """Per-class counts (top) and total queue (bottom) along one trajectory."""
    plt = _plt()
    fig, (ax, bx) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    t = np.arange(len(counts)) if times is None else times
    for k, v in enumerate(nodes):
        if counts[:, k].any():
            ax.step(t, counts[:, k], where="post", lw=0.8, label=f"class {v}")
    ax.set_ylabel("items waiting")
    ax.legend(fontsize=7, ncol=4)
    bx.step(t, counts.sum(axis=1), where="post", lw=0.8, color="black")
    bx.set_ylabel("total")
    bx.set_xlabel("time" if times is not None else "step")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_kidney(row: dict, path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    keys = ["trajectorial_average", "construction_point_fraction_mod3", "av_eb", "pi0_two_by_two"]
    vals = [float(row[k]) if row.get(k) is not None else np.nan for k in keys]
    ax.bar(range(len(keys)), vals)
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(["3x3 average", "3x3 mod 3", "empty at end", "2x2 pi0"], fontsize=8)
    ax.set_title("mu = " + ", ".join(f"{v:g}" for v in row["mu"]), fontsize=9)
    return _save(fig, path)


def plot_deviation(report: dict, path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ns = sorted(report)
    for n in ns:
        ax.scatter([n] * len(report[n]), report[n], s=10, alpha=0.5, color="grey")
    ax.plot(ns, [float(np.mean(report[n])) for n in ns], "o-", label="mean")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("sup deviation")
    ax.legend()
    return _save(fig, path)


def plot_fluid_path(times, scaled, fluid, path, label="i0"):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.step(times, scaled, where="post", lw=0.8, label=f"scaled queue {label}")
    ax.plot(times, fluid, "--", label="fluid path")
    ax.set_xlabel("scaled time")
    ax.legend()
    return _save(fig, path)


def plot_coefficients(table: dict, path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    keys = [f"lambda {k}" for k in table["lambda"]] + [f"nu {k}" for k in table["nu"]]
    vals = list(table["lambda"].values()) + list(table["nu"].values())
    ax.bar(range(len(vals)), vals)
    ax.axhline(0, color="black", lw=0.6)
    ax.set_xticks(range(len(vals)))
    ax.set_xticklabels(keys, rotation=45, fontsize=8)
    ax.set_ylabel("drift slope")
    return _save(fig, path)
