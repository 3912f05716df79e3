"""Baseline task samplers.

Each sampler owns its RNG and any memory it needs (frozen pools, hard-task
buffer, loss tables) and turns a ``TaskGenerator`` into one ``TaskPool`` per
episode. Adaptive kinds learn from ``observe_feedback``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from itertools import combinations
from typing import Optional

import numpy as np

from .measures import logdet_spd
from .tasks import CLASSIFICATION, Task, TaskPool


class SamplerKind(str, enum.Enum):
    Uniform = "Uniform"
    NDT = "NDT"
    NDE = "NDE"
    NDTE = "NDTE"
    SEU = "SEU"
    OHTM = "OHTM"
    OWHTM = "OWHTM"
    sDPP = "sDPP"
    dDPP = "dDPP"
    GCP = "GCP"
    DATS = "DATS"


CLASS_PAIR_KINDS = {SamplerKind.GCP}
EMA = 0.9
OHTM_REPLAY = 0.5


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    kind: SamplerKind = SamplerKind.Uniform
    mix_ratio: Optional[float] = None
    buffer_cap: int = 16
    candidate_factor: int = 4

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", SamplerKind(self.kind))
        except ValueError:
            raise SamplerError(f"unknown sampler kind {self.kind!r}") from None
        if self.kind == SamplerKind.OWHTM and self.mix_ratio is None:
            raise SamplerError("OWHTM requires mix_ratio")
        if self.mix_ratio is not None and not 0.0 <= self.mix_ratio <= 1.0:
            raise SamplerError(f"mix_ratio must be in [0, 1], got {self.mix_ratio}")
        if self.buffer_cap < 1:
            raise SamplerError("buffer_cap must be >= 1")
        if self.candidate_factor < 1:
            raise SamplerError("candidate_factor must be >= 1")

    @classmethod
    def from_dict(cls, obj: dict) -> "SamplerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise SamplerError(f"unknown sampler keys: {sorted(unknown)}")
        if "kind" not in obj:
            raise SamplerError("sampler config needs 'kind'")
        return cls(**obj)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "buffer_cap": self.buffer_cap,
               "candidate_factor": self.candidate_factor}
        if self.mix_ratio is not None:
            out["mix_ratio"] = self.mix_ratio
        return out


def task_descriptor(task: Task) -> np.ndarray:
    """Fixed-length feature vector of a task used for DPP similarity.

    Classification: mean of the raw features over all samples. Regression:
    ridge coefficients of y on a fixed low-order Fourier basis of x.
    """
    if task.kind == CLASSIFICATION:
        return task.all_x().mean(axis=0)
    x = task.all_x()[:, 0]
    basis = [np.ones_like(x)]
    for k in (1, 2, 3):
        basis += [np.sin(k * x), np.cos(k * x)]
    B = np.column_stack(basis)
    return np.linalg.solve(B.T @ B + 1e-3 * np.eye(B.shape[1]), B.T @ task.all_y())


def _subset_logdet(K, idx, jitter) -> float:
    sub = K[np.ix_(idx, idx)]
    return logdet_spd(sub, jitter)


def dpp_greedy_select(candidates, m: int, jitter: float = 1e-10) -> list:
    """Greedy MAP selection under a linear-kernel DPP, then 1-swap polishing.

    Greedy adds the candidate maximizing the log-det of the selected Gram
    (lowest index wins ties). Swap passes then exchange one selected item for
    one unselected item while that strictly raises the log-det, so the result
    is never beaten by a single-swap neighbor. Returns sorted indices.
    """
    F = np.array([np.asarray(c, dtype=float) for c in candidates])
    N = len(F)
    if m > N:
        raise SamplerError(f"cannot select {m} of {N} candidates")
    if m <= 0:
        return []
    K = F @ F.T
    K = 0.5 * (K + K.T)
    chosen: list = []
    for _ in range(m):
        best, best_val = None, -np.inf
        for i in range(N):
            if i in chosen:
                continue
            val = _subset_logdet(K, chosen + [i], jitter)
            if val > best_val:
                best, best_val = i, val
        chosen.append(best)
    current = _subset_logdet(K, chosen, jitter)
    tol = 1e-12 * max(1.0, abs(current))
    improved = True
    while improved and m < N:
        improved = False
        best_swap, best_val = None, current + tol
        for pos in range(m):
            for j in range(N):
                if j in chosen:
                    continue
                trial = chosen[:pos] + [j] + chosen[pos + 1:]
                val = _subset_logdet(K, trial, jitter)
                if val > best_val:
                    best_swap, best_val = (pos, j), val
        if best_swap is not None:
            pos, j = best_swap
            chosen[pos] = j
            current = best_val
            tol = 1e-12 * max(1.0, abs(current))
            improved = True
    return sorted(chosen)


def dpp_exhaustive_best(candidates, m: int, jitter: float = 1e-10):
    """Brute-force optimum over all m-subsets (oracle for small pools)."""
    F = np.array([np.asarray(c, dtype=float) for c in candidates])
    K = F @ F.T
    K = 0.5 * (K + K.T)
    best, best_val = None, -np.inf
    for subset in combinations(range(len(F)), m):
        val = _subset_logdet(K, list(subset), jitter)
        if val > best_val:
            best, best_val = list(subset), val
    return best, best_val


class Sampler:
    """Mutable sampler state; one instance per training run."""

    def __init__(self, config: SamplerConfig, seed: int):
        self.config = config
        self.kind = config.kind
        self.rng_seed = int(seed)
        self.rng = np.random.default_rng(self.rng_seed)
        self.frozen_pool: Optional[tuple] = None
        self.frozen_classes: Optional[tuple] = None
        self.hard_buffer: list = []  # (task, loss), loss descending
        self.pair_table: dict = {}
        self.loss_table: dict = {}

    @property
    def mix_ratio(self) -> float:
        if self.kind == SamplerKind.OHTM:
            return OHTM_REPLAY
        return self.config.mix_ratio or 0.0

    # pool construction ------------------------------------------------------

    def next_pool(self, gen, episode: int, n_pool: int) -> TaskPool:
        if n_pool < 1:
            raise SamplerError("n_pool must be >= 1")
        if self.kind in CLASS_PAIR_KINDS and not gen.is_classification:
            raise SamplerError(f"{self.kind.value} needs a classification generator")
        k = self.kind
        if k == SamplerKind.Uniform:
            tasks = [gen.draw() for _ in range(n_pool)]
        elif k == SamplerKind.NDT:
            if self.frozen_pool is None:
                classes = gen.random_classes(self.rng)
                self.frozen_pool = tuple(gen.draw(classes) for _ in range(n_pool))
            tasks = self.frozen_pool
        elif k == SamplerKind.NDE:
            if self.frozen_pool is None:
                sets = self._distinct_class_sets(gen, n_pool)
                self.frozen_pool = tuple(gen.draw(c) for c in sets)
            tasks = self.frozen_pool
        elif k == SamplerKind.NDTE:
            self.frozen_classes = gen.random_classes(self.rng)
            tasks = [gen.draw(self.frozen_classes) for _ in range(n_pool)]
        elif k == SamplerKind.SEU:
            tasks = [gen.draw()]
        elif k in (SamplerKind.OHTM, SamplerKind.OWHTM):
            n_hard = math.ceil(OHTM_REPLAY * n_pool) if k == SamplerKind.OHTM else math.floor(
                self.mix_ratio * n_pool)
            replay = [t for t, _ in self.hard_buffer[:n_hard]]
            tasks = replay + [gen.draw() for _ in range(n_pool - len(replay))]
        elif k == SamplerKind.sDPP:
            if self.frozen_pool is None:
                self.frozen_pool = tuple(self._dpp_pool(gen, n_pool))
            tasks = self.frozen_pool
        elif k == SamplerKind.dDPP:
            tasks = self._dpp_pool(gen, n_pool)
        elif k == SamplerKind.GCP:
            tasks = [gen.draw(self._greedy_class_set(gen)) for _ in range(n_pool)]
        elif k == SamplerKind.DATS:
            tasks = self._dats_pool(gen, n_pool)
        else:  # pragma: no cover
            raise SamplerError(f"unhandled kind {k}")
        return TaskPool(tuple(tasks), episode)

    def _distinct_class_sets(self, gen, count: int) -> list:
        sets, seen = [], set()
        for _ in range(1000 * count):
            c = gen.random_classes(self.rng)
            key = tuple(sorted(c))
            if key not in seen:
                seen.add(key)
                sets.append(c)
                if len(sets) == count:
                    return sets
        raise SamplerError("generator exhausted: not enough distinct class sets")

    def _candidates(self, gen, n_pool: int) -> list:
        return [gen.draw() for _ in range(self.config.candidate_factor * n_pool)]

    def _dpp_pool(self, gen, n_pool: int) -> list:
        cands = self._candidates(gen, n_pool)
        idx = dpp_greedy_select([task_descriptor(t) for t in cands], n_pool)
        return [cands[i] for i in idx]

    def _greedy_class_set(self, gen) -> tuple:
        total, way = gen.spec.total_classes, gen.spec.way
        order = self.rng.permutation(total)
        chosen = [int(order[0])]
        while len(chosen) < way:
            best, best_score = None, -np.inf
            for c in order[1:]:
                c = int(c)
                if c in chosen:
                    continue
                score = sum(self.pair_table.get(_pair(c, o), 0.0) for o in chosen)
                if score > best_score:
                    best, best_score = c, score
            chosen.append(best)
        return tuple(chosen)

    def _dats_pool(self, gen, n_pool: int) -> list:
        cands = self._candidates(gen, n_pool)
        default = float(np.mean(list(self.loss_table.values()))) if self.loss_table else 0.0
        scores = np.array([self.loss_table.get(t.class_signature(), default) for t in cands])
        p = np.exp(scores - scores.max())
        p /= p.sum()
        idx = self.rng.choice(len(cands), size=n_pool, replace=False, p=p)
        return [cands[i] for i in idx]

    # feedback -----------------------------------------------------------------

    def observe_feedback(self, pool: TaskPool, losses) -> None:
        losses = np.asarray(losses, dtype=float)
        if losses.shape != (len(pool),):
            raise SamplerError(f"got {losses.size} losses for a pool of {len(pool)}")
        if not np.all(np.isfinite(losses)):
            raise SamplerError("losses must be finite")
        k = self.kind
        if k in (SamplerKind.OHTM, SamplerKind.OWHTM):
            entries = {t.signature(): (t, l) for t, l in self.hard_buffer}
            for t, l in zip(pool, losses):
                entries[t.signature()] = (t, float(l))
            ranked = sorted(entries.values(), key=lambda e: -e[1])
            self.hard_buffer = ranked[: self.config.buffer_cap]
        elif k == SamplerKind.DATS:
            for t, l in zip(pool, losses):
                key = t.class_signature()
                old = self.loss_table.get(key)
                self.loss_table[key] = float(l) if old is None else EMA * old + (1 - EMA) * float(l)
        elif k == SamplerKind.GCP:
            for t, l in zip(pool, losses):
                for a, b in combinations(t.classes, 2):
                    p = _pair(a, b)
                    self.pair_table[p] = self.pair_table.get(p, 0.0) + float(l)


def _pair(a: int, b: int) -> tuple:
    return (a, b) if a < b else (b, a)


def make_sampler(kind, config: Optional[SamplerConfig] = None, seed: int = 0, **overrides) -> Sampler:
    if config is None:
        config = SamplerConfig(kind=kind, **overrides)
    elif SamplerKind(kind) != config.kind:
        raise SamplerError("kind disagrees with config.kind")
    return Sampler(config, seed)


def next_pool(state: Sampler, gen, episode: int, n_pool: int) -> TaskPool:
    return state.next_pool(gen, episode, n_pool)


def observe_feedback(state: Sampler, pool: TaskPool, losses) -> None:
    state.observe_feedback(pool, losses)


def _proxy_losses(pool: TaskPool, model) -> np.ndarray:
    """Losses of a fixed untrained model; stands in for training feedback
    when scoring samplers without a training run."""
    from .metalearn import query_loss_grad

    return np.array([query_loss_grad(model, t)[0] for t in pool])


def episode_logvolume(kind, gen_spec, episodes: int, n_pool: int, seed: int,
                      config: Optional[SamplerConfig] = None) -> float:
    """log det(Psi^T Psi) of the task descriptors pooled over ``episodes``
    episodes of one sampler run (-inf when the set is rank deficient)."""
    from .measures import tdpp_slogdet
    from .metalearn import embedding_arch, model_init, regression_arch
    from .taskgen import TaskGenerator

    ss = np.random.SeedSequence([seed])
    gen_seed, sampler_seed = (int(s) for s in ss.generate_state(2))
    gen = TaskGenerator(gen_spec, seed=gen_seed)
    config = config or SamplerConfig(kind=kind, mix_ratio=0.5 if SamplerKind(kind) == SamplerKind.OWHTM else None)
    sampler = Sampler(config, sampler_seed)
    arch = embedding_arch(gen_spec.d_in) if gen_spec.is_classification else regression_arch()
    model = model_init(arch, sampler_seed)
    vectors = []
    for e in range(episodes):
        pool = sampler.next_pool(gen, e, n_pool)
        vectors.extend(task_descriptor(t) for t in pool)
        sampler.observe_feedback(pool, _proxy_losses(pool, model))
    sign, logdet = tdpp_slogdet(vectors)
    return logdet if sign > 0 else -np.inf


def _log_mean_exp(vals) -> float:
    vals = np.asarray(vals, dtype=float)
    top = vals.max()
    if not np.isfinite(top):
        return -np.inf
    return float(top + np.log(np.mean(np.exp(vals - top))))


def sampler_diversity_score(kind, gen_spec, episodes: int = 20, n_pool: int = 2, seed: int = 0,
                            runs: int = 10, config: Optional[SamplerConfig] = None) -> float:
    """Episode-mode T-DPP volume averaged over ``runs`` reseeded runs,
    relative to the Uniform sampler on the same generators and seeds."""
    if episodes < 2:
        raise SamplerError("episodes must be >= 2")
    if SamplerKind(kind) == SamplerKind.Uniform and config is None:
        return 1.0
    seeds = [seed * 1000 + r for r in range(runs)]
    own = _log_mean_exp([episode_logvolume(kind, gen_spec, episodes, n_pool, s, config) for s in seeds])
    ref = _log_mean_exp([episode_logvolume(SamplerKind.Uniform, gen_spec, episodes, n_pool, s) for s in seeds])
    if not np.isfinite(own):
        return 0.0
    return float(np.exp(own - ref))
