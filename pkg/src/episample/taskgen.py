"""Synthetic task generators.

A generator is a pure function of ``(seed, draw index, class set)``. For the
regression families a "class" is a function id: tasks sharing it share the
curve parameters but get fresh sample points, which is what lets the
class-constrained samplers run on regression data.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.fft

from .tasks import CLASSIFICATION, REGRESSION, EncodedTask, Task

KINDS = ("sinusoid", "harmonic", "subspace_gauss")

SINUSOID_AMPLITUDE = (0.1, 5.0)
SINUSOID_FREQUENCY = (0.5, 2.0)
SINUSOID_OFFSET = (0.0, 2 * np.pi)
SINUSOID_X = (-5.0, 5.0)
HARMONIC_FREQUENCY = (5.0, 7.0)
HARMONIC_X = (-4.0, 4.0)

_TAG_FUNCTION, _TAG_DRAW, _TAG_BASES, _TAG_CLASSES = 1, 2, 3, 4


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "sinusoid"
    n_support: int = 10
    n_query: int = 10
    noise_sd: float = 0.1
    # subspace_gauss only; n_support/n_query count samples per class there
    total_classes: int = 20
    way: int = 5
    dim: int = 64
    class_dim: int = 2
    spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.n_support < 1 or self.n_query < 1:
            raise ValueError("n_support and n_query must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.kind == "subspace_gauss":
            if not 1 <= self.way <= self.total_classes:
                raise ValueError("need 1 <= way <= total_classes")
            if self.class_dim < 1 or self.class_dim > self.dim:
                raise ValueError("class_dim must be in [1, dim]")
            if self.way * self.class_dim > self.dim:
                raise ValueError("sum of class subspace dims exceeds dim")

    @property
    def is_classification(self) -> bool:
        return self.kind == "subspace_gauss"

    @property
    def d_in(self) -> int:
        return self.dim if self.is_classification else 1

    @classmethod
    def from_dict(cls, obj: dict) -> "GeneratorSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown generator keys: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class SinusoidParams:
    amplitude: float
    frequency: float
    offset: float


@dataclass(frozen=True)
class HarmonicParams:
    a1: float
    a2: float
    frequency: float
    b1: float
    b2: float


def sinusoid_value(x, p: SinusoidParams):
    return p.amplitude * np.sin(p.frequency * np.asarray(x)) + p.offset


def harmonic_value(x, p: HarmonicParams):
    x = np.asarray(x)
    return p.a1 * np.sin(p.frequency * x + p.b1) + p.a2 * np.sin(2 * p.frequency * x + p.b2)


def draw_sinusoid_params(rng) -> SinusoidParams:
    return SinusoidParams(
        rng.uniform(*SINUSOID_AMPLITUDE), rng.uniform(*SINUSOID_FREQUENCY), rng.uniform(*SINUSOID_OFFSET)
    )


def draw_harmonic_params(rng) -> HarmonicParams:
    a1, a2 = rng.normal(size=2)
    w = rng.uniform(*HARMONIC_FREQUENCY)
    b1, b2 = rng.uniform(0.0, 2 * np.pi, size=2)
    return HarmonicParams(a1, a2, w, b1, b2)


def _regression_task(rng, spec, fn, x_range, params, classes, index) -> Task:
    n = spec.n_support + spec.n_query
    x = rng.uniform(*x_range, size=n)
    y = fn(x, params) + rng.normal(0.0, spec.noise_sd, size=n) if spec.noise_sd else fn(x, params)
    s = spec.n_support
    return Task(x[:s, None], y[:s], x[s:, None], y[s:], REGRESSION, classes, index)


def sinusoid_task(rng, spec: GeneratorSpec, params: Optional[SinusoidParams] = None,
                  classes=(), index: int = -1) -> Task:
    """A sinusoid task; ``params`` are drawn from ``rng`` unless given."""
    if params is None:
        params = draw_sinusoid_params(rng)
    return _regression_task(rng, spec, sinusoid_value, SINUSOID_X, params, classes, index)


def harmonic_task(rng, spec: GeneratorSpec, params: Optional[HarmonicParams] = None,
                  classes=(), index: int = -1) -> Task:
    if params is None:
        params = draw_harmonic_params(rng)
    return _regression_task(rng, spec, harmonic_value, HARMONIC_X, params, classes, index)


@lru_cache(maxsize=16)
def _class_geometry(seed: int, total: int, dim: int, class_dim: int):
    """Per-class orthonormal bases (dim x class_dim) and in-subspace centers."""
    rng = np.random.default_rng([seed, _TAG_BASES])
    bases = np.stack([np.linalg.qr(rng.normal(size=(dim, class_dim)))[0] for _ in range(total)])
    centers = rng.normal(size=(total, class_dim))
    bases.setflags(write=False)
    centers.setflags(write=False)
    return bases, centers


def subspace_gauss_task(rng, spec: GeneratorSpec, classes=None, index: int = -1) -> Task:
    """Each class lives on its own low-dimensional subspace (plus isotropic
    noise): samples are ``B_c (m_c + spread * u) + noise``, ``u ~ N(0, I)``."""
    bases, centers = _class_geometry(spec.seed, spec.total_classes, spec.dim, spec.class_dim)
    if classes is None:
        classes = tuple(int(c) for c in rng.choice(spec.total_classes, size=spec.way, replace=False))
    classes = tuple(classes)
    if len(set(classes)) != len(classes):
        raise ValueError("duplicate classes in task")
    if len(classes) * spec.class_dim > spec.dim:
        raise ValueError("sum of selected class subspace dims exceeds dim")

    def draw(per_class):
        xs, ys = [], []
        for local, c in enumerate(classes):
            u = centers[c] + spec.spread * rng.normal(size=(per_class, spec.class_dim))
            x = u @ bases[c].T
            if spec.noise_sd:
                x = x + rng.normal(0.0, spec.noise_sd, size=x.shape)
            xs.append(x)
            ys.append(np.full(per_class, local))
        return np.vstack(xs), np.concatenate(ys)

    sx, sy = draw(spec.n_support)
    qx, qy = draw(spec.n_query)
    return Task(sx, sy, qx, qy, CLASSIFICATION, classes, index)


def orthogonal_fixture(d: int, class_dims, class_counts) -> EncodedTask:
    """Class blocks on disjoint coordinate subspaces, each with all nonzero
    singular values equal to sqrt(n_j / d_j), so ||Z C_j||_F^2 = n_j."""
    class_dims, class_counts = tuple(class_dims), tuple(class_counts)
    if len(class_dims) != len(class_counts) or not class_dims:
        raise ValueError("class_dims and class_counts must be nonempty and equal length")
    if sum(class_dims) > d:
        raise ValueError("sum of class dims exceeds d")
    if any(n < k or k < 1 for k, n in zip(class_dims, class_counts)):
        raise ValueError("each class needs count >= dim >= 1")
    blocks, offset = [], 0
    for d_j, n_j in zip(class_dims, class_counts):
        # rows of the orthonormal DCT-II matrix: Q Q^T = I
        Q = scipy.fft.dct(np.eye(n_j), norm="ortho", axis=0)[:d_j]
        block = np.zeros((d, n_j))
        block[offset:offset + d_j] = np.sqrt(n_j / d_j) * Q
        blocks.append(block)
        offset += d_j
    return EncodedTask.from_blocks(blocks)


class TaskGenerator:
    """Deterministic task source; ``make`` is pure, ``draw`` advances an
    internal draw counter."""

    def __init__(self, spec: GeneratorSpec, seed: Optional[int] = None, start: int = 0):
        self.spec = spec
        self.seed = spec.seed if seed is None else int(seed)
        self.counter = start

    @property
    def is_classification(self) -> bool:
        return self.spec.is_classification

    def clone(self, offset: int = 0) -> "TaskGenerator":
        return TaskGenerator(self.spec, self.seed, self.counter + offset)

    def random_classes(self, rng, k: Optional[int] = None) -> tuple:
        if self.is_classification:
            k = self.spec.way if k is None else k
            return tuple(int(c) for c in rng.choice(self.spec.total_classes, size=k, replace=False))
        return (int(rng.integers(0, 2**31)),)

    def make(self, index: int, classes=None) -> Task:
        spec = self.spec
        rng = np.random.default_rng([self.seed, _TAG_DRAW, index])
        if spec.kind == "subspace_gauss":
            if classes is None:
                crng = np.random.default_rng([self.seed, _TAG_CLASSES, index])
                classes = self.random_classes(crng)
            return subspace_gauss_task(rng, spec, classes, index)
        fid = index if classes is None else int(classes[0])
        prng = np.random.default_rng([self.seed, _TAG_FUNCTION, fid])
        if spec.kind == "sinusoid":
            return sinusoid_task(rng, spec, draw_sinusoid_params(prng), (fid,), index)
        return harmonic_task(rng, spec, draw_harmonic_params(prng), (fid,), index)

    def draw(self, classes=None) -> Task:
        task = self.make(self.counter, classes)
        self.counter += 1
        return task
