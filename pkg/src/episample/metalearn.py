"""Tiny differentiable models and the episodic inner/outer loops.

Models are plain MLPs whose parameters live in one flat vector; gradients are
hand-written reverse mode. Layer ``l`` stores its weight matrix (out x in,
row-major) followed by its bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .tasks import CLASSIFICATION, Task, WeightedPool

ALGOS = ("fomaml", "reptile", "protonet")
LOSSES = ("mse", "proto_ce")


class DivergenceError(FloatingPointError):
    pass


@dataclass(frozen=True)
class Arch:
    sizes: tuple
    activation: str = "tanh"
    head: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"bad layer sizes {self.sizes}")
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @cached_property
    def n_params(self) -> int:
        return sum(o * i + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    @cached_property
    def _slices(self) -> tuple:
        out, start = [], 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            out.append((slice(start, start + o * i), slice(start + o * i, start + o * i + o), (o, i)))
            start += o * i + o
        return tuple(out)

    def slices(self) -> list:
        return list(self._slices)


@dataclass(frozen=True, eq=False)
class MetaModel:
    arch: Arch
    theta: np.ndarray
    _layers: list = field(init=False, repr=False)

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (self.arch.n_params,):
            raise ValueError("parameter vector does not match architecture")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        layers = [(theta[ws].reshape(shape), theta[bs]) for ws, bs, shape in self.arch._slices]
        object.__setattr__(self, "_layers", layers)

    @property
    def d_in(self) -> int:
        return self.arch.sizes[0]

    @property
    def d_out(self) -> int:
        return self.arch.sizes[-1]

    def with_theta(self, theta) -> "MetaModel":
        return MetaModel(self.arch, theta)

    def forward(self, X) -> list:
        """Activations of every layer, input first."""
        h = np.asarray(X, dtype=float)
        acts = [h]
        last = len(self._layers) - 1
        for i, (W, b) in enumerate(self._layers):
            h = h @ W.T + b
            if i < last and self.arch.activation == "tanh":
                h = np.tanh(h)
            acts.append(h)
        return acts

    def __call__(self, X) -> np.ndarray:
        return self.forward(X)[-1]

    def embed(self, X) -> np.ndarray:
        acts = self.forward(X)
        return acts[-2] if self.arch.head else acts[-1]

    def backward(self, acts: list, dout, want_input: bool = False):
        grad = np.empty(self.arch.n_params)
        g = dout
        slices = self.arch._slices
        for i in range(len(self._layers) - 1, -1, -1):
            W, _ = self._layers[i]
            ws, bs, _ = slices[i]
            grad[ws] = (g.T @ acts[i]).ravel()
            grad[bs] = g.sum(axis=0)
            if i == 0 and not want_input:
                break
            g = g @ W
            if i > 0 and self.arch.activation == "tanh":
                g = g * (1.0 - acts[i] ** 2)
        return grad, (g if want_input else None)


def model_init(arch: Arch, seed: int) -> MetaModel:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(arch.n_params)
    for ws, _, (out, fan_in) in arch.slices():
        s = 1.0 / np.sqrt(fan_in)
        theta[ws] = rng.uniform(-s, s, size=out * fan_in)
    return MetaModel(arch, theta)


def regression_arch(hidden=(40, 40), d_in: int = 1) -> Arch:
    return Arch((d_in, *hidden, 1), "tanh", head=True)


def embedding_arch(d_in: int, embed_dim: int = 8, hidden=()) -> Arch:
    return Arch((d_in, *hidden, embed_dim), "identity", head=False)


# losses ---------------------------------------------------------------------


def _mse(model, X, y, want_input):
    acts = model.forward(X)
    r = acts[-1][:, 0] - y
    loss = float(r @ r) / len(r)
    dout = (2.0 / len(y)) * r[:, None]
    g, gx = model.backward(acts, dout, want_input)
    return loss, g, gx


def _proto_logits(Eq, P):
    diff = Eq[:, None, :] - P[None, :, :]
    return -np.einsum("ikd,ikd->ik", diff, diff), diff


def _proto_ce(model, X, y, sX, sy, want_input, detach_protos):
    y = np.asarray(y, dtype=int)
    sy = np.asarray(sy, dtype=int)
    k = int(sy.max()) + 1
    if np.any(y >= k) or not set(np.unique(y)) <= set(np.unique(sy)):
        raise ValueError("proto_ce: query class absent from support")
    nq = len(y)
    acts = model.forward(np.vstack([X, sX]))
    E = acts[-1]
    Eq, Es = E[:nq], E[nq:]
    counts = np.bincount(sy, minlength=k).astype(float)
    onehot_s = np.eye(k)[sy]
    P = (onehot_s.T @ Es) / counts[:, None]
    logits, diff = _proto_logits(Eq, P)
    logits = logits - logits.max(axis=1, keepdims=True)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    loss = float(-np.mean(logp[np.arange(nq), y]))
    dlogit = (np.exp(logp) - np.eye(k)[y]) / nq
    # logit_ic = -|Eq_i - P_c|^2
    dEq = -2.0 * np.einsum("ik,ikd->id", dlogit, diff)
    dEs = np.zeros_like(Es)
    if not detach_protos:
        dP = 2.0 * np.einsum("ik,ikd->kd", dlogit, diff)
        dEs = onehot_s @ (dP / counts[:, None])
    g, gx = model.backward(acts, np.vstack([dEq, dEs]), want_input)
    return loss, g, (gx[:nq] if want_input else None)


def loss_and_grad(model: MetaModel, X, y, loss_kind: str = "mse", support=None):
    """Mean loss over ``(X, y)`` and its exact gradient w.r.t. ``model.theta``.

    ``proto_ce`` builds prototypes from ``support`` (an ``(X, y)`` pair),
    defaulting to the evaluated data itself.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise ValueError("empty data")
    if loss_kind == "mse":
        loss, g, _ = _mse(model, X, np.asarray(y, dtype=float), False)
    elif loss_kind == "proto_ce":
        sX, sy = support if support is not None else (X, y)
        loss, g, _ = _proto_ce(model, X, y, np.asarray(sX, dtype=float), sy, False, False)
    else:
        raise ValueError(f"unknown loss {loss_kind!r}")
    return loss, g


def loss_kind_for(task: Task) -> str:
    return "proto_ce" if task.kind == CLASSIFICATION else "mse"


def summed_gradient(model: MetaModel, task: Task, which: str, space: str = "parameters"):
    """Sum of per-sample loss gradients over the support or query set.

    Classification losses take prototypes from the support set. In input
    space the prototypes are held fixed, so only the evaluated samples carry
    gradient.
    """
    X, y = (task.support_x, task.support_y) if which == "support" else (task.query_x, task.query_y)
    want_input = space == "inputs"
    if task.kind == CLASSIFICATION:
        _, g, gx = _proto_ce(
            model, X, y, task.support_x, task.support_y, want_input, detach_protos=want_input
        )
    else:
        _, g, gx = _mse(model, X, y, want_input)
    n = len(y)
    return n * (gx.sum(axis=0) if want_input else g)


def grad_check(model: MetaModel, X, y, loss_kind: str = "mse", support=None, h: float = 1e-5) -> float:
    """Max over parameters of |analytic - central difference| / scale, where
    scale = max(|analytic_i|, |numeric_i|, 1e-3 * max|analytic|)."""
    _, g = loss_and_grad(model, X, y, loss_kind, support)
    num = np.empty_like(g)
    theta = model.theta.copy()
    for i in range(len(theta)):
        theta[i] += h
        fp, _ = loss_and_grad(model.with_theta(theta), X, y, loss_kind, support)
        theta[i] -= 2 * h
        fm, _ = loss_and_grad(model.with_theta(theta), X, y, loss_kind, support)
        theta[i] += h
        num[i] = (fp - fm) / (2 * h)
    return relative_error(g, num)


def relative_error(analytic, numeric) -> float:
    a, n = np.asarray(analytic), np.asarray(numeric)
    floor = max(1e-3 * np.abs(a).max(), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


# inner / outer loops ----------------------------------------------------------


def inner_adapt(model: MetaModel, X, y, lr: float, steps: int, loss_kind: str = "mse", support=None) -> MetaModel:
    """``steps`` plain gradient steps on the support loss; returns a new model."""
    if lr < 0 or steps < 0:
        raise ValueError("lr and steps must be >= 0")
    if steps == 0 or lr == 0:
        return model
    theta = model.theta.copy()
    m = model
    for _ in range(steps):
        loss, g = loss_and_grad(m, X, y, loss_kind, support)
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite loss during adaptation")
        theta = theta - lr * g
        m = model.with_theta(theta)
    return m


def _adapt_on_support(model, task, lr, steps):
    kind = loss_kind_for(task)
    return inner_adapt(model, task.support_x, task.support_y, lr, steps, kind)


def query_loss_grad(model: MetaModel, task: Task):
    kind = loss_kind_for(task)
    support = (task.support_x, task.support_y) if kind == "proto_ce" else None
    return loss_and_grad(model, task.query_x, task.query_y, kind, support)


def meta_step(model: MetaModel, wpool: WeightedPool, algo: str, lambda_inner: float,
              lambda_outer: float, inner_steps: int):
    """One weighted outer update. Returns the new model and the per-task query
    losses after support adaptation."""
    if algo not in ALGOS:
        raise ValueError(f"unknown algo {algo!r}")
    update = np.zeros_like(model.theta)
    losses = np.empty(len(wpool.pool))
    for i, (task, w) in enumerate(zip(wpool.pool, wpool.weights)):
        if algo == "protonet":
            if task.kind != CLASSIFICATION:
                raise ValueError("protonet needs classification tasks")
            loss, g = query_loss_grad(model, task)
            update -= w * g
        elif algo == "fomaml":
            adapted = _adapt_on_support(model, task, lambda_inner, inner_steps)
            loss, g = query_loss_grad(adapted, task)
            update -= w * g
        else:
            adapted = _adapt_on_support(model, task, lambda_inner, inner_steps)
            loss, _ = query_loss_grad(adapted, task)
            joint = _joint_task(task)
            full = _adapt_on_support(model, joint, lambda_inner, inner_steps)
            update += w * (full.theta - model.theta)
        losses[i] = loss
    theta = model.theta + lambda_outer * update
    if not np.all(np.isfinite(theta)) or not np.all(np.isfinite(losses)):
        raise DivergenceError("non-finite meta update")
    return model.with_theta(theta), losses


def _joint_task(task: Task) -> Task:
    """Task whose support is support + query (Reptile adapts on all data)."""
    return Task(task.all_x(), task.all_y(), task.query_x, task.query_y, task.kind, task.classes, task.index)


def evaluate(model: MetaModel, tasks, lr: float, steps: int, algo: str) -> float:
    """Mean query MSE (regression) or accuracy (classification) after
    adapting on each task's support set."""
    scores = []
    for task in tasks:
        adapted = model if algo == "protonet" else _adapt_on_support(model, task, lr, steps)
        if task.kind == CLASSIFICATION:
            scores.append(proto_accuracy(adapted, task))
        else:
            pred = adapted(task.query_x)[:, 0]
            scores.append(float(np.mean((pred - task.query_y) ** 2)))
    return float(np.mean(scores))


def proto_accuracy(model: MetaModel, task: Task) -> float:
    Es = model(task.support_x)
    k = task.way
    P = np.stack([Es[task.support_y == c].mean(axis=0) for c in range(k)])
    logits, _ = _proto_logits(model(task.query_x), P)
    return float(np.mean(np.argmax(logits, axis=1) == task.query_y))
