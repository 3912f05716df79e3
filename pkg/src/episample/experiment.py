"""Multi-seed experiments: per-seed CSVs, a summary table and a curve plot."""

from __future__ import annotations

import json
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

from .config import RunConfig
from .plotting import plot
from .training import CSV_VERSION, RunError, run_training


def _workers(n_jobs: int) -> int:
    cap = os.environ.get("EPISAMPLE_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def _one(cfg: RunConfig, seed: int):
    t0 = time.time()
    try:
        runlog = run_training(cfg, seed)
    except RunError as exc:
        raise RunError(f"seed {seed}: {exc}") from exc
    return runlog, time.time() - t0


def summary_csv(label: str, finals: dict) -> str:
    vals = [finals[s] for s in sorted(finals)]
    mean = statistics.fmean(vals)
    std = statistics.stdev(vals) if len(vals) > 1 else 0.0
    lines = [CSV_VERSION, "label,seed,final_metric"]
    lines += [f"{label},{s},{finals[s]:.10g}" for s in sorted(finals)]
    lines.append(f"{label},mean,{mean:.10g}")
    lines.append(f"{label},std,{std:.10g}")
    return "\n".join(lines) + "\n"


def run_experiment(cfg: RunConfig, out_dir: Optional[str] = None) -> dict:
    """Run every seed of ``cfg``; returns the written paths and per-seed logs."""
    out = Path(out_dir or cfg.out or "episample-out")
    out.mkdir(parents=True, exist_ok=True)
    seeds = cfg.run_seeds
    started = time.time()
    workers = _workers(len(seeds))
    if workers == 1:
        results = [_one(cfg, s) for s in seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one, [cfg] * len(seeds), seeds))

    csvs, logs, timings = [], {}, {}
    for seed, (runlog, wall) in zip(seeds, results):
        path = out / f"run_seed{seed}.csv"
        path.write_text(runlog.to_csv())
        csvs.append(path)
        logs[seed] = runlog
        timings[str(seed)] = round(wall, 3)

    summary = out / "summary.csv"
    summary.write_text(summary_csv(cfg.label, {s: logs[s].final_metric for s in seeds}))
    svg = plot(csvs, out / "curves.svg")
    meta = out / "meta.json"
    meta.write_text(json.dumps({
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_seconds": round(time.time() - started, 3),
        "seed_seconds": timings,
        "workers": workers,
    }, indent=2) + "\n")
    return {"csvs": csvs, "summary": summary, "svg": svg, "meta": meta, "logs": logs}
