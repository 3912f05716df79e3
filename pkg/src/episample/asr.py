"""Adaptive sampler: a small network scoring each task's measurement triple.

Scores are softplus outputs, so they are strictly positive and normalize into
episode weights without a division-by-zero case. The network is trained to
lower the weighted query loss ``J = sum_i w_i * loss_i`` with the per-task
losses held fixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_INPUTS = 3
MODES = ("weight_only", "resample")


@dataclass(frozen=True, eq=False)
class AsrParams:
    hidden: int
    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.shape != (asr_param_count(self.hidden),):
            raise ValueError("phi does not match the architecture")
        if not np.all(np.isfinite(phi)):
            raise ValueError("non-finite ASr parameters")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)

    def unpack(self):
        H = self.hidden
        W1 = self.phi[: N_INPUTS * H].reshape(H, N_INPUTS)
        b1 = self.phi[N_INPUTS * H: N_INPUTS * H + H]
        W2 = self.phi[N_INPUTS * H + H: N_INPUTS * H + 2 * H]
        b2 = self.phi[-1]
        return W1, b1, W2, b2

    def to_dict(self) -> dict:
        return {
            "arch": {"inputs": N_INPUTS, "hidden": self.hidden,
                     "hidden_activation": "relu", "output_activation": "softplus"},
            "phi": self.phi.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AsrParams":
        arch = obj["arch"]
        if arch.get("inputs", N_INPUTS) != N_INPUTS:
            raise ValueError("ASr expects 3 inputs")
        return cls(int(arch["hidden"]), obj["phi"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "AsrParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def asr_param_count(hidden: int) -> int:
    return N_INPUTS * hidden + hidden + hidden + 1


def asr_init(hidden: int = 16, seed: int = 0) -> AsrParams:
    if hidden < 1:
        raise ValueError("hidden must be >= 1")
    rng = np.random.default_rng(seed)
    phi = np.zeros(asr_param_count(hidden))
    s1, s2 = 1.0 / np.sqrt(N_INPUTS), 1.0 / np.sqrt(hidden)
    phi[: N_INPUTS * hidden] = rng.uniform(-s1, s1, size=N_INPUTS * hidden)
    phi[N_INPUTS * hidden + hidden: N_INPUTS * hidden + 2 * hidden] = rng.uniform(-s2, s2, size=hidden)
    return AsrParams(hidden, phi)


def _inputs(ms) -> np.ndarray:
    rows = []
    for m in ms:
        t = getattr(m, "normalized", m)
        if t is None:
            raise ValueError("ASr needs normalized measurement triples")
        rows.append(np.asarray(t, dtype=float))
    X = np.array(rows, dtype=float).reshape(len(rows), -1)
    if X.shape[1] != N_INPUTS:
        raise ValueError("measurement triples must have 3 components")
    return X


def _softplus(a):
    return np.logaddexp(0.0, a)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _forward(params: AsrParams, X):
    W1, b1, W2, b2 = params.unpack()
    pre = X @ W1.T + b1
    h = np.maximum(pre, 0.0)
    a = h @ W2 + b2
    return pre, h, a, _softplus(a)


def asr_scores(params: AsrParams, ms) -> np.ndarray:
    scores = _forward(params, _inputs(ms))[-1]
    if not np.all(np.isfinite(scores)):
        raise FloatingPointError("non-finite ASr output")
    return scores


def asr_weights(params: AsrParams, ms) -> np.ndarray:
    if len(ms) == 0:
        raise ValueError("empty measurement list")
    s = asr_scores(params, ms)
    return s / s.sum()


def asr_objective(params: AsrParams, ms, query_losses) -> float:
    return float(asr_weights(params, ms) @ np.asarray(query_losses, dtype=float))


def asr_grad(params: AsrParams, ms, query_losses) -> np.ndarray:
    """Gradient of sum_i w_i(phi) * loss_i, losses treated as constants."""
    losses = np.asarray(query_losses, dtype=float)
    X = _inputs(ms)
    if losses.shape != (len(X),):
        raise ValueError("need one query loss per task")
    if not np.all(np.isfinite(losses)):
        raise ValueError("non-finite query loss")
    W1, _, W2, _ = params.unpack()
    pre, h, a, s = _forward(params, X)
    S = s.sum()
    J = (s / S) @ losses
    ds = (losses - J) / S
    da = ds * _sigmoid(a)
    gW2 = h.T @ da
    gb2 = da.sum()
    dpre = np.outer(da, W2) * (pre > 0)
    gW1 = dpre.T @ X
    gb1 = dpre.sum(axis=0)
    grad = np.concatenate([gW1.ravel(), gb1, gW2, [gb2]])
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite ASr gradient")
    return grad


def asr_update(params: AsrParams, grad, lr: float) -> AsrParams:
    if lr <= 0:
        raise ValueError("lr must be > 0")
    return AsrParams(params.hidden, params.phi - lr * np.asarray(grad, dtype=float))


def asr_descend(params: AsrParams, ms, query_losses, lr: float = 1e-2, steps: int = 50,
                min_lr: float = 1e-6):
    """Gradient steps on one frozen episode, halving the step until J does
    not increase. Returns the final params and the J trace (initial first)."""
    trace = [asr_objective(params, ms, query_losses)]
    for _ in range(steps):
        g = asr_grad(params, ms, query_losses)
        step = lr
        while True:
            cand = asr_update(params, g, step)
            j = asr_objective(cand, ms, query_losses)
            if j <= trace[-1] or step / 2 < min_lr:
                break
            step /= 2
        if j <= trace[-1]:
            params = cand
            trace.append(j)
        else:
            trace.append(trace[-1])
    return params, trace
