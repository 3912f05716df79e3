"""Log-det kernels and the three task-quality measurements.

All log-determinants are natural logs computed from a Cholesky factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tasks import CLASSIFICATION, EncodedTask, MeasurementVector, Task


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class MeasureConfig:
    sigma: float = 0.5
    epsilon: float = 0.5
    gradient_space: str = "parameters"
    jitter: float = 1e-10
    encoder: str = "model"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        if self.gradient_space not in ("parameters", "inputs"):
            raise ValueError(f"unknown gradient_space {self.gradient_space!r}")
        if self.encoder not in ("identity", "model"):
            raise ValueError(f"unknown encoder {self.encoder!r}")


def logdet_spd(M, jitter: float = 0.0) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("logdet_spd needs a square matrix")
    if not np.allclose(M, M.T, atol=1e-8, rtol=0):
        raise ValueError("matrix is not symmetric")
    if jitter:
        M = M + jitter * np.eye(len(M))
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("not positive definite") from None
    out = 2.0 * np.sum(np.log(np.diag(L)))
    if not np.isfinite(out):
        raise NotPositiveDefinite("not positive definite")
    return float(out)


def det_bruteforce(M) -> float:
    """Cofactor expansion along the first row. Exact up to float rounding,
    exponential cost, so capped at 6x6."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n):
        raise ValueError("det_bruteforce needs a square matrix")
    if n > 6:
        raise ValueError("oracle size limit: side length > 6")
    return _cofactor(M.tolist())


def _cofactor(rows: list) -> float:
    n = len(rows)
    if n == 0:
        return 1.0
    if n == 1:
        return rows[0][0]
    total = 0.0
    for j in range(n):
        if rows[0][j] == 0:
            continue
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        total += (-1) ** j * rows[0][j] * _cofactor(minor)
    return total


def singular_values(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    if not np.all(np.isfinite(Z)):
        raise ValueError("non-finite input")
    s = np.linalg.svd(Z, compute_uv=False)
    return np.sort(np.abs(s))[::-1]


def gram_logdet(Z, c: float, jitter: float = 0.0) -> float:
    """logdet(I + c Z Z^T), evaluated on whichever Gram side is smaller."""
    Z = np.asarray(Z, dtype=float)
    d, n = Z.shape
    G = Z.T @ Z if n < d else Z @ Z.T
    G = c * G
    G[np.diag_indices_from(G)] += 1.0
    return logdet_spd(0.5 * (G + G.T), jitter)


def task_diversity(et: EncodedTask, cfg: MeasureConfig = MeasureConfig()) -> float:
    n, d = et.n, et.d
    c = d / (n * cfg.sigma**2)
    return max(0.0, 0.5 * n * gram_logdet(et.Z, c, cfg.jitter))


def task_entropy(et: EncodedTask, cfg: MeasureConfig = MeasureConfig()) -> float:
    if et.k == 0:
        raise ValueError("empty partition")
    n, d = et.n, et.d
    total = 0.0
    for j, n_j in enumerate(et.class_sizes):
        if n_j == 0:
            raise ValueError(f"empty class {j}")
        c = d / (n_j * cfg.epsilon**2)
        total += n_j / (2.0 * n) * gram_logdet(et.block(j), c, cfg.jitter)
    return max(0.0, total)


def gradient_gap(g_support, g_query) -> float:
    diff = np.asarray(g_support, dtype=float) - np.asarray(g_query, dtype=float)
    return float(diff @ diff)


def task_difficulty(task: Task, model, cfg: MeasureConfig = MeasureConfig()) -> float:
    """Squared norm between the summed per-sample loss gradients of the
    support set and of the query set, taken w.r.t. the model parameters or
    w.r.t. the inputs (summed over samples)."""
    from .metalearn import summed_gradient

    with np.errstate(over="ignore", invalid="ignore"):
        g_s = summed_gradient(model, task, "support", cfg.gradient_space)
        g_q = summed_gradient(model, task, "query", cfg.gradient_space)
    if not (np.all(np.isfinite(g_s)) and np.all(np.isfinite(g_q))):
        raise FloatingPointError("divergent loss")
    return gradient_gap(g_s, g_q)


def task_mean_vector(et: EncodedTask) -> np.ndarray:
    return et.Z.mean(axis=1)


def class_mean_vectors(et: EncodedTask) -> list:
    return [et.block(j).mean(axis=1) for j in range(et.k)]


def tdpp_score(vectors, mode: str = "task") -> float:
    """Squared volume spanned by ``vectors``: det(Psi^T Psi).

    ``mode`` only records how the caller built the vectors (class means of one
    task, task means of one episode, or task means pooled over episodes); the
    volume itself is computed the same way for all three.
    """
    if mode not in ("class", "task", "episode"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(vectors) == 0:
        raise ValueError("empty input")
    sign, logdet = tdpp_slogdet(vectors)
    return float(np.exp(logdet)) if sign > 0 else 0.0


def tdpp_slogdet(vectors) -> tuple:
    Psi = np.column_stack([np.asarray(v, dtype=float) for v in vectors])
    if Psi.shape[1] > Psi.shape[0]:
        return 0.0, -np.inf
    # det(Psi^T Psi) = prod(s^2); numerically rank-deficient sets count as 0
    s = np.linalg.svd(Psi, compute_uv=False)
    tol = max(Psi.shape) * np.finfo(float).eps * (s[0] if len(s) else 0.0)
    if len(s) == 0 or s[-1] <= tol:
        return 0.0, -np.inf
    return 1.0, float(2.0 * np.sum(np.log(s)))


def normalize_measures(ms: list) -> list:
    if not ms:
        raise ValueError("empty measurement list")
    raw = np.array([m.raw() for m in ms])
    lo, hi = raw.min(axis=0), raw.max(axis=0)
    span = hi - lo
    scaled = np.where(span > 0, (raw - lo) / np.where(span > 0, span, 1.0), 0.5)
    return [
        MeasurementVector(m.t_dg, m.t_et, m.t_df, tuple(float(v) for v in row))
        for m, row in zip(ms, scaled)
    ]


def simple_weighted_sum(t) -> float:
    """diversity + entropy - difficulty on a normalized triple."""
    if isinstance(t, MeasurementVector):
        t = t.normalized
    dg, et, df = (float(v) for v in t)
    if not all(0.0 <= v <= 1.0 for v in (dg, et, df)):
        raise ValueError("normalized components must lie in [0, 1]")
    return dg + et - df


def measure_task(task: Task, model, cfg: MeasureConfig = MeasureConfig()) -> MeasurementVector:
    from .tasks import EncoderSpec, encode_task

    enc = EncoderSpec(cfg.encoder, model if cfg.encoder == "model" else None)
    et = encode_task(task, enc)
    return MeasurementVector(
        task_diversity(et, cfg), task_entropy(et, cfg), task_difficulty(task, model, cfg)
    )


def task_tdpp(task: Task) -> float:
    """Class-mode volume of one task on its raw features."""
    from .tasks import encode_task

    et = encode_task(task)
    vecs = class_mean_vectors(et) if task.kind == CLASSIFICATION else [task_mean_vector(et)]
    return tdpp_score(vecs, "class")
