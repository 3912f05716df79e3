import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from episample.measures import (
    MeasureConfig, NotPositiveDefinite, det_bruteforce, gradient_gap, gram_logdet, logdet_spd,
    measure_task, normalize_measures, simple_weighted_sum, singular_values, task_difficulty,
    task_diversity, task_entropy, tdpp_score,
)
from episample.metalearn import embedding_arch, model_init, regression_arch
from episample.tasks import EncodedTask, MeasurementVector, Task

from conftest import make_cls_task, make_reg_task

S1 = MeasureConfig(sigma=1.0, epsilon=1.0, jitter=0.0)


def single(Z):
    Z = np.asarray(Z, dtype=float)
    return EncodedTask(Z, (tuple(range(Z.shape[1])),))


# logdet / det oracles --------------------------------------------------------

def test_logdet_identity():
    assert logdet_spd(np.eye(2)) == 0.0


def test_logdet_diag():
    assert logdet_spd(np.diag([2.0, 2.0])) == pytest.approx(1.386294, abs=1e-6)


def test_logdet_indefinite():
    with pytest.raises(NotPositiveDefinite, match="not positive definite"):
        logdet_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_det_bruteforce_examples():
    assert det_bruteforce(np.eye(3)) == 1.0
    assert det_bruteforce([[1, 2], [3, 4]]) == -2.0
    assert det_bruteforce([[1, 2, 3], [1, 2, 3], [0, 1, 5]]) == 0.0


def test_det_bruteforce_size_limit():
    with pytest.raises(ValueError, match="oracle size limit"):
        det_bruteforce(np.eye(7))


@pytest.mark.parametrize("Z, expected", [
    (np.eye(2), [1, 1]),
    (np.diag([3.0, 0.0]), [3, 0]),
    ([[0, 1], [1, 0]], [1, 1]),
])
def test_singular_values(Z, expected):
    assert np.allclose(singular_values(Z), expected)


# diversity / entropy ------------------------------------------------------------

def test_diversity_examples():
    assert task_diversity(single(np.zeros((2, 2))), S1) == 0.0
    assert task_diversity(single(np.eye(2)), S1) == pytest.approx(1.386294, abs=1e-6)
    assert task_diversity(single([[1, 1], [0, 0]]), S1) == pytest.approx(1.098612, abs=1e-6)


def test_entropy_examples():
    assert task_entropy(single(np.zeros((2, 2))), S1) == 0.0
    assert task_entropy(single(np.eye(2)), S1) == pytest.approx(0.693147, abs=1e-6)
    two = EncodedTask(np.eye(2), ((0,), (1,)))
    assert task_entropy(two, S1) == pytest.approx(0.549306, abs=1e-6)


def test_entropy_empty_class():
    et = EncodedTask(np.eye(2), ((0, 1), ()))
    with pytest.raises(ValueError, match="empty class 1"):
        task_entropy(et)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=st.floats(-3, 3)),
       st.floats(0.1, 2.0))
def test_entropy_single_class_reduction(Z, s):
    cfg = MeasureConfig(sigma=s, epsilon=s)
    et = single(Z)
    assert task_entropy(et, cfg) == pytest.approx(task_diversity(et, cfg) / et.n, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 20), st.integers(1, 20)), elements=st.floats(-3, 3)),
       st.floats(0.01, 10.0))
def test_sylvester_dual_form(Z, c):
    d, n = Z.shape
    A = np.eye(d) + c * Z @ Z.T
    B = np.eye(n) + c * Z.T @ Z
    assert abs(logdet_spd(0.5 * (A + A.T)) - logdet_spd(0.5 * (B + B.T))) < 1e-8
    assert gram_logdet(Z, c) == pytest.approx(logdet_spd(0.5 * (A + A.T)), abs=1e-8)


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(-2, 2)),
       st.floats(1.0, 5.0), st.floats(1.0, 5.0))
def test_diversity_scale_monotone(Z, a, b):
    lo, hi = sorted((a, b))
    assert task_diversity(single(lo * Z)) <= task_diversity(single(hi * Z)) + 1e-9


# difficulty ------------------------------------------------------------------------

def test_gradient_gap_examples():
    assert gradient_gap([1, 0], [0, 1]) == 2.0
    assert gradient_gap([1, 0], [2, 0]) == 1.0


@pytest.mark.parametrize("space", ["parameters", "inputs"])
def test_difficulty_zero_when_query_equals_support(space):
    cfg = MeasureConfig(gradient_space=space)
    t = make_cls_task(way=3, shots=2, d=4)
    mirror = Task(t.support_x, t.support_y, t.support_x, t.support_y, t.kind)
    assert task_difficulty(mirror, model_init(embedding_arch(4, 8), 0), cfg) == 0.0
    r = make_reg_task(n_support=5)
    mirror = Task(r.support_x, r.support_y, r.support_x, r.support_y, r.kind)
    assert task_difficulty(mirror, model_init(regression_arch((8,)), 0), cfg) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["parameters", "inputs"]))
def test_difficulty_nonnegative(seed, space):
    task = make_reg_task(4, 5, seed=seed)
    model = model_init(regression_arch((6,)), seed)
    assert task_difficulty(task, model, MeasureConfig(gradient_space=space)) >= 0.0


def test_difficulty_divergent_loss():
    task = make_reg_task()
    model = model_init(regression_arch((4,)), 0)
    big = model.with_theta(np.full(model.theta.shape, 1e300))
    with pytest.raises(FloatingPointError, match="divergent loss"):
        task_difficulty(task, big)


# T-DPP / normalization ---------------------------------------------------------------

def test_tdpp_examples():
    assert tdpp_score([[1, 0], [0, 1]]) == pytest.approx(1.0)
    assert tdpp_score([[1, 2], [1, 2]]) == 0.0
    assert tdpp_score([[2, 0], [0, 3]]) == pytest.approx(36.0)


def test_normalize_examples():
    ms = [MeasurementVector(v, 1.0, 0.5 * v) for v in (0.0, 1.0, 2.0)]
    out = normalize_measures(ms)
    assert [m.normalized[0] for m in out] == [0.0, 0.5, 1.0]
    assert all(m.normalized[1] == 0.5 for m in out)
    assert normalize_measures([MeasurementVector(3, 2, 1)])[0].normalized == (0.5, 0.5, 0.5)


def test_simple_weighted_sum():
    assert simple_weighted_sum((1, 1, 0)) == 2
    assert simple_weighted_sum((0, 0, 1)) == -1
    assert simple_weighted_sum((0.5, 0.5, 0.5)) == 0.5
    with pytest.raises(ValueError):
        simple_weighted_sum((2, 0, 0))


def test_measure_task_model_encoder():
    task = make_cls_task(way=3, shots=2, d=5)
    m = measure_task(task, model_init(embedding_arch(5, 8), 0))
    assert m.t_dg > 0 and m.t_et > 0 and m.t_df >= 0
    ident = measure_task(task, model_init(embedding_arch(5, 8), 0), MeasureConfig(encoder="identity"))
    assert ident.t_dg != m.t_dg


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10**6))
def test_det_oracle_agrees(side, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(side, side))
    M = A @ A.T + 0.1 * np.eye(side)
    ref = det_bruteforce(M)
    assert math.exp(logdet_spd(M)) == pytest.approx(ref, rel=1e-10)
