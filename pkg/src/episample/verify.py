"""Property suites that check the measures, oracles, gradients and samplers
against fixed thresholds. ``verify()`` runs them and collects a report."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional

import numpy as np

from .asr import AsrParams, asr_grad, asr_objective, asr_param_count
from .measures import MeasureConfig, det_bruteforce, logdet_spd, task_difficulty, task_entropy
from .metalearn import embedding_arch, grad_check, model_init, regression_arch, relative_error
from .samplers import SamplerKind, dpp_exhaustive_best, dpp_greedy_select, sampler_diversity_score
from .taskgen import GeneratorSpec, TaskGenerator, orthogonal_fixture
from .tasks import EncodedTask, MeasurementVector, Task


@dataclass
class SuiteResult:
    name: str
    passed: bool
    measured: object
    threshold: str
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: measured={self.measured} threshold={self.threshold} ({self.seconds:.1f}s) {self.detail}".rstrip()


@dataclass
class VerifyReport:
    results: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def names(self) -> list:
        return [r.name for r in self.results]

    def text(self) -> str:
        lines = [r.line() for r in self.results]
        lines.append(f"overall: {'PASS' if self.ok else 'FAIL'} ({sum(r.passed for r in self.results)}/{len(self.results)})")
        return "\n".join(lines)


# helpers --------------------------------------------------------------------


def coding_rate_sides(et: EncodedTask, sigma: float = 0.5) -> tuple:
    """Both sides of the block inequality for the coding rate: the whole-task
    rate and the sum of per-class rates, with the same scale c = d/(n sigma^2)."""
    n, d = et.n, et.d
    c = d / (n * sigma**2)

    def rate(Z):
        G = c * (Z.T @ Z)
        G[np.diag_indices_from(G)] += 1.0
        return 0.5 * n * logdet_spd(0.5 * (G + G.T))

    return rate(et.Z), sum(rate(et.block(j)) for j in range(et.k))


def _random_fixture_shape(rng, eps: float):
    while True:
        k = int(rng.integers(1, 4))
        dims = [int(v) for v in rng.integers(1, 4, size=k)]
        counts = [dj + int(rng.integers(0, 5)) for dj in dims]
        d = sum(dims) + int(rng.integers(0, 6))
        n = sum(counts)
        if eps**4 < min((nj / n) * (d * d / (dj * dj)) for nj, dj in zip(counts, dims)):
            return d, dims, counts


def _feasible_block(rng, d, d_j, n_j, base=None, scale=None):
    """Random d x n_j block of rank <= d_j with squared Frobenius norm n_j.
    With ``base``, perturb it by ``scale`` instead of drawing from scratch."""
    if base is None:
        U = np.linalg.qr(rng.normal(size=(d, d_j)))[0]
        B = U @ rng.normal(size=(d_j, n_j))
    else:
        B = base + scale * rng.normal(size=base.shape)
        U, s, Vt = np.linalg.svd(B, full_matrices=False)
        B = (U[:, :d_j] * s[:d_j]) @ Vt[:d_j]
    return B * np.sqrt(n_j) / np.linalg.norm(B)


def _regression_task(rng):
    kind = ("sinusoid", "harmonic")[int(rng.integers(2))]
    gen = TaskGenerator(GeneratorSpec(kind=kind, n_support=int(rng.integers(2, 11)), n_query=int(rng.integers(2, 11))),
                        seed=int(rng.integers(2**31)))
    return gen.make(int(rng.integers(1000)))


_SMALL_GAUSS = GeneratorSpec(kind="subspace_gauss", n_support=3, n_query=3, way=3, dim=16, class_dim=2, total_classes=8)


def _random_task_model(rng):
    if rng.random() < 0.5:
        task = _regression_task(rng)
        model = model_init(regression_arch((8, 8)), int(rng.integers(2**31)))
    else:
        gen = TaskGenerator(_SMALL_GAUSS, seed=int(rng.integers(2**31)))
        task = gen.make(int(rng.integers(1000)))
        model = model_init(embedding_arch(16, 4, (8,)), int(rng.integers(2**31)))
    return task, model


# suites -----------------------------------------------------------------------


def suite_theorem1_equality(quick=False) -> SuiteResult:
    rng = np.random.default_rng([7, 1])
    worst = 0.0
    for _ in range(20 if quick else 100):
        d, dims, counts = _random_fixture_shape(rng, 0.5)
        lhs, rhs = coding_rate_sides(orthogonal_fixture(d, dims, counts))
        worst = max(worst, abs(lhs - rhs))
    return SuiteResult("theorem1_equality", worst < 1e-8, worst, "max |LHS-RHS| < 1e-8")


def suite_theorem1_strict(quick=False) -> SuiteResult:
    rng = np.random.default_rng([7, 2])
    least = np.inf
    for _ in range(20 if quick else 100):
        k = int(rng.integers(2, 4))
        counts = [int(v) for v in rng.integers(1, 5, size=k)]
        d = int(rng.integers(2, 10))
        et = EncodedTask.from_blocks([rng.normal(size=(d, nj)) for nj in counts])
        lhs, rhs = coding_rate_sides(et)
        least = min(least, rhs - lhs)
    return SuiteResult("theorem1_strict", least > 1e-6, least, "min (RHS-LHS) > 1e-6")


def suite_theorem2_maximality(quick=False) -> SuiteResult:
    rng = np.random.default_rng([7, 3])
    cfg = MeasureConfig()
    worst = np.inf
    n_shapes, n_pert = (3, 40) if quick else (10, 200)
    for _ in range(n_shapes):
        d, dims, counts = _random_fixture_shape(rng, cfg.epsilon)
        fixture = orthogonal_fixture(d, dims, counts)
        best = task_entropy(fixture, cfg)
        for p in range(n_pert):
            if p % 2:
                blocks = [_feasible_block(rng, d, dj, nj) for dj, nj in zip(dims, counts)]
            else:
                scale = 10.0 ** rng.uniform(-4, 0)
                blocks = [_feasible_block(rng, d, dj, nj, fixture.block(j), scale)
                          for j, (dj, nj) in enumerate(zip(dims, counts))]
            worst = min(worst, best - task_entropy(EncodedTask.from_blocks(blocks), cfg))
    return SuiteResult("theorem2_maximality", worst >= -1e-10, worst,
                       "min t_et(fixture) - t_et(perturbed) >= -1e-10")


def suite_theorem3_nonneg(quick=False) -> SuiteResult:
    rng = np.random.default_rng([7, 4])
    low, same = np.inf, 0.0
    for i in range(100 if quick else 1000):
        task, model = _random_task_model(rng)
        cfg = MeasureConfig(gradient_space=("parameters", "inputs")[i % 2])
        low = min(low, task_difficulty(task, model, cfg))
        mirror = Task(task.support_x, task.support_y, task.support_x, task.support_y, task.kind, task.classes)
        same = max(same, task_difficulty(mirror, model, cfg))
    return SuiteResult("theorem3_nonneg", low >= 0 and same < 1e-12, {"min_t_df": low, "max_t_df_same": same},
                       "min t_df >= 0; t_df < 1e-12 when query = support")


def suite_sylvester(quick=False) -> SuiteResult:
    rng = np.random.default_rng([7, 5])
    worst = 0.0
    for _ in range(100):
        d, n = (int(v) for v in rng.integers(1, 21, size=2))
        Z = rng.normal(size=(d, n))
        c = 10.0 ** rng.uniform(-2, 1)
        A = np.eye(d) + c * Z @ Z.T
        B = np.eye(n) + c * Z.T @ Z
        worst = max(worst, abs(logdet_spd(0.5 * (A + A.T)) - logdet_spd(0.5 * (B + B.T))))
    return SuiteResult("sylvester", worst < 1e-8, worst, "max |delta| < 1e-8")


def suite_dpp_oracle(quick=False) -> SuiteResult:
    rng = np.random.default_rng([7, 6])
    det_err = 0.0
    for _ in range(100):
        s = int(rng.integers(1, 5))
        A = rng.normal(size=(s, s))
        M = A @ A.T + 0.1 * np.eye(s)
        ref = det_bruteforce(M)
        det_err = max(det_err, abs(np.exp(logdet_spd(M)) - ref) / abs(ref))
    gap = 0.0
    reps = 4 if quick else 25
    for size, m in product(range(1, 7), range(1, 4)):
        if m > size:
            continue
        for _ in range(reps):
            dim = int(rng.integers(m, 7))
            cands = rng.normal(size=(size, dim)) * rng.uniform(0.2, 3.0, size=(size, 1))
            K = cands @ cands.T
            sel = dpp_greedy_select(cands, m)
            _, best = dpp_exhaustive_best(cands, m)
            got = logdet_spd(K[np.ix_(sel, sel)], 1e-10)
            gap = max(gap, best - got)
    passed = det_err < 1e-10 and gap < 1e-9
    return SuiteResult("dpp_oracle", passed, {"det_rel_err": det_err, "greedy_gap": gap},
                       "det rel err < 1e-10; greedy log-det gap < 1e-9")


def suite_gradcheck_models(quick=False) -> SuiteResult:
    rng = np.random.default_rng([7, 7])
    worst = 0.0
    gauss = TaskGenerator(_SMALL_GAUSS, seed=3)
    shipped = [
        (regression_arch(), "mse"),
        (regression_arch((8, 8)), "mse"),
        (embedding_arch(16, 8), "proto_ce"),
        (embedding_arch(16, 4, (8,)), "proto_ce"),
    ]
    for arch, loss in shipped:
        for trial in range(1 if quick else 2):
            model = model_init(arch, int(rng.integers(2**31)))
            if loss == "mse":
                task = TaskGenerator(GeneratorSpec(), seed=trial).make(trial)
                worst = max(worst, grad_check(model, task.query_x, task.query_y))
            else:
                task = gauss.make(trial)
                worst = max(worst, grad_check(model, task.query_x, task.query_y, "proto_ce",
                                              (task.support_x, task.support_y)))
    return SuiteResult("gradcheck_models", worst < 1e-4, worst, "max relative error < 1e-4")


def asr_fd_error(params: AsrParams, ms, losses, h: float = 1e-5) -> float:
    g = asr_grad(params, ms, losses)
    num = np.empty_like(g)
    phi = params.phi.copy()
    for i in range(len(phi)):
        phi[i] += h
        fp = asr_objective(AsrParams(params.hidden, phi), ms, losses)
        phi[i] -= 2 * h
        fm = asr_objective(AsrParams(params.hidden, phi), ms, losses)
        phi[i] += h
        num[i] = (fp - fm) / (2 * h)
    return relative_error(g, num)


def suite_gradcheck_asr(quick=False) -> SuiteResult:
    rng = np.random.default_rng([7, 8])
    worst = 0.0
    for _ in range(20):
        params = AsrParams(16, rng.normal(scale=0.5, size=asr_param_count(16)))
        n = int(rng.integers(2, 9))
        ms = [MeasurementVector(1.0, 1.0, 1.0, tuple(rng.uniform(size=3))) for _ in range(n)]
        worst = max(worst, asr_fd_error(params, ms, rng.uniform(0.1, 5.0, size=n)))
    return SuiteResult("gradcheck_asr", worst < 1e-4, worst, "max relative error < 1e-4")


def suite_sampler_table1_ordering(quick=False) -> SuiteResult:
    spec = GeneratorSpec(kind="subspace_gauss")
    runs = 3 if quick else 10
    scores = {k.value: sampler_diversity_score(k, spec, episodes=20, runs=runs)
              for k in (SamplerKind.NDT, SamplerKind.NDE, SamplerKind.Uniform, SamplerKind.dDPP)}
    passed = scores["NDT"] < 0.01 and scores["NDE"] < 0.01 and scores["Uniform"] == 1.0 and scores["dDPP"] > 1.2
    return SuiteResult("sampler_table1_ordering", passed, {k: round(v, 4) for k, v in scores.items()},
                       "NDT < 0.01, NDE < 0.01, Uniform = 1.0, dDPP > 1.2")


SINUSOID_BASE = {
    "generator": {"kind": "sinusoid"},
    "algo": "fomaml",
    "episodes": 5000,
    "n_pool": 4,
    "eval_every": 5000,
    "seeds": 5,
    "seed": 0,
}
SINUSOID_VARIANTS = {
    "Uniform": {"sampler": {"kind": "Uniform"}},
    "SEU": {"sampler": {"kind": "SEU"}},
    "ASr": {"asr": {}},
}


def sinusoid_runs(quick=False) -> dict:
    """Run logs of Uniform, SEU and ASr on the sinusoid family, one per seed,
    with identical generator, model and evaluation seeds across samplers."""
    from .config import config_from_dict
    from .training import run_training

    out = {}
    for name, part in SINUSOID_VARIANTS.items():
        obj = {**SINUSOID_BASE, **part}
        if quick:
            obj.update(episodes=100, seeds=2, eval_every=100, eval_tasks=50)
        cfg = config_from_dict(obj)
        out[name] = [run_training(cfg, s) for s in cfg.run_seeds]
    return out


def sinusoid_finals(runs: dict) -> dict:
    return {name: [log.final_metric for log in logs] for name, logs in runs.items()}


def sinusoid_ordering_result(finals: dict, quick=False) -> SuiteResult:
    mean = {k: float(np.mean(v)) for k, v in finals.items()}
    passed = mean["ASr"] <= mean["Uniform"] and mean["SEU"] >= 1.3 * mean["Uniform"]
    return SuiteResult("sinusoid_ordering", passed, {k: round(v, 4) for k, v in mean.items()},
                       "MSE(ASr) <= MSE(Uniform), MSE(SEU) >= 1.3 MSE(Uniform)",
                       "quick mode: reduced scale, not the full check" if quick else "")


def suite_sinusoid_ordering(quick=False) -> SuiteResult:
    return sinusoid_ordering_result(sinusoid_finals(sinusoid_runs(quick)), quick)


SUITES: dict[str, Callable[..., SuiteResult]] = {
    "theorem1_equality": suite_theorem1_equality,
    "theorem1_strict": suite_theorem1_strict,
    "theorem2_maximality": suite_theorem2_maximality,
    "theorem3_nonneg": suite_theorem3_nonneg,
    "sylvester": suite_sylvester,
    "dpp_oracle": suite_dpp_oracle,
    "gradcheck_models": suite_gradcheck_models,
    "gradcheck_asr": suite_gradcheck_asr,
    "sampler_table1_ordering": suite_sampler_table1_ordering,
    "sinusoid_ordering": suite_sinusoid_ordering,
}


def run_suite(name: str, quick=False) -> SuiteResult:
    t0 = time.perf_counter()
    try:
        res = SUITES[name](quick)
    except Exception as exc:  # a crashing suite is a failing suite
        res = SuiteResult(name, False, None, "", f"error: {type(exc).__name__}: {exc}")
    res.seconds = time.perf_counter() - t0
    return res


def verify(suite_filter: Optional[str] = None, quick: bool = False) -> VerifyReport:
    """Run every registered suite whose name contains ``suite_filter``."""
    names = [n for n in SUITES if suite_filter is None or suite_filter in n]
    if not names:
        raise KeyError(f"no suite matches {suite_filter!r}; known: {', '.join(SUITES)}")
    return VerifyReport([run_suite(n, quick) for n in names])
