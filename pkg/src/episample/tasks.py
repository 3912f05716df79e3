"""Task containers, encodings and structural validation.

Tasks keep their samples as dense arrays (one row per sample) because every
consumer downstream works on matrices; ``Sample`` exists for the JSON surface
and for callers that prefer records.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

CLASSIFICATION = "classification"
REGRESSION = "regression"


class TaskError(ValueError):
    """Raised when a task, pool or encoding violates a structural invariant."""


@dataclass(frozen=True)
class Sample:
    x: tuple
    y: float | int


def _as_rows(x, width=0) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.size == 0:
        return a.reshape(0, width)
    return a.reshape(len(a), -1) if a.ndim == 1 else a


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Task:
    """A support/query split sharing one feature dimension.

    ``support_y``/``query_y`` hold local class ids (0..way-1) for
    classification tasks and real targets for regression tasks. ``classes``
    maps local ids to generator-global ids; regression tasks carry the id of
    the function they were drawn from.
    """

    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray
    kind: str = REGRESSION
    classes: tuple = ()
    index: int = -1

    def __post_init__(self):
        ydt = int if self.kind == CLASSIFICATION else float
        sx = _as_rows(self.support_x)
        qx = _as_rows(self.query_x, sx.shape[1])
        object.__setattr__(self, "support_x", _frozen(sx))
        object.__setattr__(self, "query_x", _frozen(qx))
        object.__setattr__(self, "support_y", _frozen(np.ravel(self.support_y), ydt))
        object.__setattr__(self, "query_y", _frozen(np.ravel(self.query_y), ydt))
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))

    def validate(self) -> "Task":
        check_task(self)
        return self

    @property
    def d_in(self) -> int:
        return self.support_x.shape[1]

    @property
    def n(self) -> int:
        return len(self.support_y) + len(self.query_y)

    @property
    def way(self) -> int:
        if self.kind == REGRESSION:
            return 1
        return len(np.unique(self.support_y))

    @property
    def shots(self) -> int:
        if self.kind == REGRESSION:
            return len(self.support_y)
        return int(np.bincount(self.support_y)[0])

    @property
    def support(self) -> list[Sample]:
        return _records(self.support_x, self.support_y)

    @property
    def query(self) -> list[Sample]:
        return _records(self.query_x, self.query_y)

    def all_x(self) -> np.ndarray:
        return np.vstack([self.support_x, self.query_x])

    def all_y(self) -> np.ndarray:
        return np.concatenate([self.support_y, self.query_y])

    def signature(self) -> str:
        """Identity of a generated task: sorted class ids plus draw index."""
        key = f"{sorted(self.classes)}|{self.index}"
        return hashlib.sha1(key.encode()).hexdigest()[:16]

    def class_signature(self) -> str:
        return hashlib.sha1(str(sorted(self.classes)).encode()).hexdigest()[:16]

    def same_data(self, other: "Task") -> bool:
        return (
            self.kind == other.kind
            and np.array_equal(self.support_x, other.support_x)
            and np.array_equal(self.support_y, other.support_y)
            and np.array_equal(self.query_x, other.query_x)
            and np.array_equal(self.query_y, other.query_y)
        )


def _records(x, y) -> list[Sample]:
    return [Sample(tuple(float(v) for v in xi), yi.item()) for xi, yi in zip(x, y)]


def check_task(task: Task) -> None:
    if task.kind not in (CLASSIFICATION, REGRESSION):
        raise TaskError(f"unknown label kind {task.kind!r}")
    if len(task.support_y) == 0 or task.support_x.shape[0] == 0:
        raise TaskError("empty support set")
    if len(task.query_y) == 0 or task.query_x.shape[0] == 0:
        raise TaskError("empty query set")
    if task.support_x.shape[0] != len(task.support_y):
        raise TaskError("support x/y length mismatch")
    if task.query_x.shape[0] != len(task.query_y):
        raise TaskError("query x/y length mismatch")
    if task.support_x.shape[1] != task.query_x.shape[1]:
        raise TaskError("dimension mismatch between support and query")
    for arr in (task.support_x, task.query_x, task.support_y, task.query_y):
        if not np.all(np.isfinite(arr)):
            raise TaskError("non-finite sample")
    if task.kind == CLASSIFICATION:
        if task.support_y.min() < 0 or task.query_y.min() < 0:
            raise TaskError("negative class id")
        counts = np.bincount(task.support_y)
        present = counts[counts > 0]
        if len(present) != len(counts):
            raise TaskError("support class ids are not contiguous from 0")
        if np.any(present != present[0]):
            raise TaskError("support has unequal shots per class")
        if not set(np.unique(task.query_y)) <= set(np.unique(task.support_y)):
            raise TaskError("query class absent from support")


@dataclass(frozen=True)
class TaskPool:
    tasks: tuple
    episode_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.episode_index < 0:
            raise TaskError("negative episode index")

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    def signatures(self) -> list[str]:
        return [t.signature() for t in self.tasks]


def validate_pool(pool: TaskPool) -> None:
    """Raise ``TaskError`` naming the first offending task, else return None."""
    if len(pool.tasks) == 0:
        raise TaskError("empty pool")
    first = pool.tasks[0]
    for i, task in enumerate(pool.tasks):
        try:
            check_task(task)
        except TaskError as exc:
            raise TaskError(f"task {i}: {exc}") from None
        if task.d_in != first.d_in:
            raise TaskError(
                f"task {i}: dimension mismatch ({task.d_in} != {first.d_in})"
            )
        if task.kind != first.kind:
            raise TaskError(f"task {i}: label kind mismatch")


@dataclass(frozen=True, eq=False)
class EncodedTask:
    """Representation matrix ``Z`` (d x n, one column per sample) plus the
    class partition of its columns. Columns are support first, then query."""

    Z: np.ndarray
    partition: tuple
    source: Optional[Task] = None
    class_sizes: tuple = field(init=False)

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float, ndmin=2)
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)
        parts = tuple(tuple(int(i) for i in p) for p in self.partition)
        object.__setattr__(self, "partition", parts)
        object.__setattr__(self, "class_sizes", tuple(len(p) for p in parts))
        if not np.all(np.isfinite(Z)):
            raise TaskError("non-finite encoder output")
        flat = [i for p in parts for i in p]
        if sorted(flat) != list(range(Z.shape[1])):
            raise TaskError("partition must cover every column exactly once")

    @property
    def d(self) -> int:
        return self.Z.shape[0]

    @property
    def n(self) -> int:
        return self.Z.shape[1]

    @property
    def k(self) -> int:
        return len(self.partition)

    def block(self, j: int) -> np.ndarray:
        return self.Z[:, list(self.partition[j])]

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray]) -> "EncodedTask":
        Z = np.hstack(blocks)
        parts, start = [], 0
        for b in blocks:
            parts.append(range(start, start + b.shape[1]))
            start += b.shape[1]
        return cls(Z, tuple(parts))


@dataclass(frozen=True)
class EncoderSpec:
    """``identity`` keeps raw features; ``model`` uses the meta-model's
    embedding layer (penultimate layer for models with a prediction head)."""

    kind: str = "identity"
    model: object = None

    def __post_init__(self):
        if self.kind not in ("identity", "model"):
            raise TaskError(f"unknown encoder {self.kind!r}")
        if self.kind == "model" and self.model is None:
            raise TaskError("model encoder needs a model")


def partition_of(task: Task) -> tuple:
    if task.kind == REGRESSION:
        return (tuple(range(task.n)),)
    labels = task.all_y()
    return tuple(tuple(np.flatnonzero(labels == c)) for c in range(task.way))


def encode_task(task: Task, encoder: EncoderSpec = EncoderSpec()) -> EncodedTask:
    X = task.all_x()
    if encoder.kind == "identity":
        Z = X.T
    else:
        model = encoder.model
        if model.d_in != task.d_in:
            raise TaskError(
                f"dimension mismatch: encoder expects {model.d_in}, task has {task.d_in}"
            )
        Z = model.embed(X).T
    return EncodedTask(Z, partition_of(task), task)


@dataclass(frozen=True)
class MeasurementVector:
    t_dg: float
    t_et: float
    t_df: float
    normalized: Optional[tuple] = None

    def __post_init__(self):
        for name in ("t_dg", "t_et", "t_df"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise TaskError(f"{name} must be finite and >= 0, got {v}")

    def raw(self) -> np.ndarray:
        return np.array([self.t_dg, self.t_et, self.t_df])


@dataclass(frozen=True)
class WeightedPool:
    pool: TaskPool
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(self.pool),):
            raise TaskError("weight vector length must equal pool size")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise TaskError("weights must lie on the probability simplex")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, pool: TaskPool) -> "WeightedPool":
        return cls(pool, np.full(len(pool), 1.0 / len(pool)))


# JSON surface ---------------------------------------------------------------


def task_to_dict(task: Task) -> dict:
    def rows(x, y):
        return [{"x": xi.tolist(), "y": yi.item()} for xi, yi in zip(x, y)]

    return {
        "kind": task.kind,
        "classes": list(task.classes),
        "index": task.index,
        "support": rows(task.support_x, task.support_y),
        "query": rows(task.query_x, task.query_y),
    }


def task_from_dict(obj: dict) -> Task:
    try:
        sup, qry = obj["support"], obj["query"]
    except KeyError as exc:
        raise TaskError(f"task JSON missing {exc.args[0]!r}") from None
    if not sup or not qry:
        raise TaskError("empty support or query set")
    kind = obj.get("kind")
    if kind is None:
        ys = [s["y"] for s in sup + qry]
        kind = CLASSIFICATION if all(isinstance(y, int) for y in ys) else REGRESSION
    return Task(
        support_x=[s["x"] for s in sup],
        support_y=[s["y"] for s in sup],
        query_x=[s["x"] for s in qry],
        query_y=[s["y"] for s in qry],
        kind=kind,
        classes=obj.get("classes", ()),
        index=obj.get("index", -1),
    ).validate()


def load_task(path) -> Task:
    return task_from_dict(json.loads(Path(path).read_text()))


def save_task(task: Task, path) -> None:
    Path(path).write_text(json.dumps(task_to_dict(task)) + "\n")
