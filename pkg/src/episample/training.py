"""Episode loop: sample, measure, weight, adapt, update, feed back, log."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .asr import asr_grad, asr_init, asr_update, asr_weights
from .config import RunConfig
from .measures import measure_task, normalize_measures
from .metalearn import evaluate, meta_step, model_init
from .samplers import Sampler, SamplerConfig, SamplerKind
from .taskgen import TaskGenerator
from .tasks import TaskPool, WeightedPool

log = logging.getLogger(__name__)

CSV_VERSION = "# episample-csv v1"
CSV_COLUMNS = ["episode", "mean_query_loss", "eval_metric", "w_min", "w_max",
               "t_dg_mean", "t_et_mean", "t_df_mean"]


class RunError(RuntimeError):
    pass


@dataclass
class EpisodeRecord:
    episode: int
    mean_query_loss: float
    eval_metric: Optional[float]
    weights: np.ndarray
    measures: np.ndarray  # pool x 3, raw triples
    wall_time: float


@dataclass
class RunLog:
    label: str
    seed: int
    header: dict
    records: list = field(default_factory=list)
    final_metric: float = float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_VERSION + "\n")
        buf.write(f"# label: {self.label}\n")
        buf.write(f"# seed: {self.seed}\n")
        buf.write(f"# final_metric: {_fmt(self.final_metric)}\n")
        buf.write(f"# config: {json.dumps(self.header, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            means = r.measures.mean(axis=0)
            w.writerow([
                r.episode, _fmt(r.mean_query_loss),
                "" if r.eval_metric is None else _fmt(r.eval_metric),
                _fmt(r.weights.min()), _fmt(r.weights.max()),
                _fmt(means[0]), _fmt(means[1]), _fmt(means[2]),
            ])
        return buf.getvalue()


def _fmt(v) -> str:
    return format(float(v), ".10g")


def _seeds(seed: int) -> list:
    return [int(s) for s in np.random.SeedSequence([seed]).generate_state(6)]


def run_training(cfg: RunConfig, seed: Optional[int] = None) -> RunLog:
    seed = cfg.seed if seed is None else seed
    gen_seed, eval_seed, model_seed, sampler_seed, asr_seed, pick_seed = _seeds(seed)
    gen = TaskGenerator(cfg.generator, seed=gen_seed)
    eval_gen = TaskGenerator(cfg.generator, seed=eval_seed)
    eval_tasks = [eval_gen.make(i) for i in range(cfg.eval_tasks)]
    model = model_init(cfg.model.arch_for(cfg.generator), model_seed)
    sampler = Sampler(cfg.sampler or SamplerConfig(SamplerKind.Uniform), sampler_seed)
    asr = asr_init(cfg.asr.hidden, asr_seed) if cfg.asr else None
    pick_rng = np.random.default_rng(pick_seed)
    runlog = RunLog(cfg.label, seed, cfg.to_dict())
    every = cfg.eval_interval

    for e in range(cfg.episodes):
        t0 = time.perf_counter()
        try:
            if asr is not None and cfg.asr.mode == "resample":
                pool = _resample_pool(cfg, sampler, gen, asr, model, e, pick_rng)
            else:
                pool = sampler.next_pool(gen, e, cfg.n_pool)
            ms = normalize_measures([measure_task(t, model, cfg.measure) for t in pool])
            if asr is not None:
                w = asr_weights(asr, ms)
            else:
                w = np.full(len(pool), 1.0 / len(pool))
            model_next, losses = meta_step(
                model, WeightedPool(pool, w), cfg.algo, cfg.lambda_inner, cfg.lambda_outer, cfg.inner_steps
            )
            sampler.observe_feedback(pool, losses)
            if asr is not None:
                asr = asr_update(asr, asr_grad(asr, ms, losses), cfg.asr.lr)
            model = model_next
            metric = None
            if (e + 1) % every == 0 or e + 1 == cfg.episodes:
                metric = evaluate(model, eval_tasks, cfg.lambda_inner, cfg.eval_steps, cfg.algo)
        except (ArithmeticError, ValueError) as exc:
            raise RunError(f"episode {e}: {exc}") from exc
        runlog.records.append(EpisodeRecord(
            e, float(np.mean(losses)), metric, w, np.array([m.raw() for m in ms]),
            time.perf_counter() - t0,
        ))
        if metric is not None:
            log.info("%s seed=%d episode=%d eval=%.4f", cfg.label, seed, e, metric)
    runlog.final_metric = runlog.records[-1].eval_metric
    return runlog


def _resample_pool(cfg, sampler, gen, asr, model, episode, rng) -> TaskPool:
    """Draw a candidate reservoir and keep n_pool tasks with probability
    proportional to the ASr weights."""
    reservoir = sampler.next_pool(gen, episode, cfg.asr.candidate_factor * cfg.n_pool)
    ms = normalize_measures([measure_task(t, model, cfg.measure) for t in reservoir])
    w = asr_weights(asr, ms)
    idx = np.sort(rng.choice(len(reservoir), size=cfg.n_pool, replace=False, p=w))
    return TaskPool(tuple(reservoir[i] for i in idx), episode)
