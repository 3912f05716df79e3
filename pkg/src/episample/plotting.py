"""Training-curve figures from run CSVs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .training import CSV_COLUMNS, CSV_VERSION  # noqa: E402


class PlotError(ValueError):
    pass


def read_run_csv(path) -> dict:
    """Parse a run CSV into {'meta': {...}, 'rows': [dict, ...]}."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_VERSION:
        raise PlotError(f"{path}: missing {CSV_VERSION!r} header")
    meta, body = {}, []
    for line in lines[1:]:
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            meta[key] = val
        else:
            body.append(line)
    reader = csv.DictReader(body)
    if reader.fieldnames != CSV_COLUMNS:
        raise PlotError(f"{path}: schema mismatch, columns {reader.fieldnames}")
    return {"meta": meta, "rows": list(reader)}


def plot(csv_paths, out_svg) -> Path:
    """One curve per CSV (episode vs eval metric), legend by sampler label.
    Each curve is tagged with gid ``curve<i>`` in the SVG."""
    csv_paths = list(csv_paths)
    if not csv_paths:
        raise PlotError("no CSV files to plot")
    runs = [read_run_csv(p) for p in csv_paths]

    plt.rcParams["svg.hashsalt"] = "episample"
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    colors = {}
    for i, run in enumerate(runs):
        pts = [(int(r["episode"]), float(r["eval_metric"])) for r in run["rows"] if r["eval_metric"]]
        label = run["meta"].get("label", "run")
        first = label not in colors
        if first:
            colors[label] = f"C{len(colors) % 10}"
        xs = [p[0] + 1 for p in pts]
        ys = [p[1] for p in pts]
        (line,) = ax.plot(xs, ys, color=colors[label], lw=1.2, label=label if first else None)
        line.set_gid(f"curve{i}")
    ax.set_xlabel("episode")
    ax.set_ylabel("eval metric")
    ax.legend(frameon=False)
    fig.tight_layout()
    out = Path(out_svg)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
