import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from episample.asr import (
    AsrParams, asr_descend, asr_grad, asr_init, asr_objective, asr_param_count, asr_update, asr_weights,
)
from episample.tasks import MeasurementVector
from episample.verify import asr_fd_error


def triples(rng, n):
    return [MeasurementVector(1.0, 1.0, 1.0, tuple(rng.uniform(size=3))) for _ in range(n)]


def test_param_count_and_init():
    assert asr_param_count(16) == 81
    a, b = asr_init(16, 3), asr_init(16, 3)
    assert a.phi.size == 81 and np.array_equal(a.phi, b.phi)
    W1, b1, W2, b2 = a.unpack()
    assert np.all(b1 == 0) and b2 == 0
    assert np.all(np.abs(W1) <= 1 / np.sqrt(3)) and np.all(np.abs(W2) <= 0.25)
    with pytest.raises(ValueError):
        asr_init(0, 0)


def test_weights_normalize_scores():
    # hidden=1, ReLU(x0) -> identity-ish: choose weights so scores are softplus^-1 of (2, 3, 5)
    target = np.array([2.0, 3.0, 5.0])
    pre = np.log(np.expm1(target))
    phi = np.array([1.0, 0, 0, 0.0, 1.0, 0.0])  # W1, b1, W2, b2
    ms = [MeasurementVector(0, 0, 0, (p, 0.0, 0.0)) for p in pre]
    assert np.allclose(asr_weights(AsrParams(1, phi), ms), [0.2, 0.3, 0.5])


def test_single_and_identical():
    p = asr_init(16, 0)
    m = MeasurementVector(1, 1, 1, (0.3, 0.2, 0.9))
    assert asr_weights(p, [m]) == pytest.approx([1.0])
    assert np.allclose(asr_weights(p, [m] * 4), 0.25)


def test_weights_need_normalized():
    with pytest.raises(ValueError):
        asr_weights(asr_init(4, 0), [MeasurementVector(1, 1, 1)])


def test_grad_zero_cases():
    rng = np.random.default_rng(0)
    p, ms = asr_init(16, 1), triples(rng, 4)
    assert np.allclose(asr_grad(p, ms, [2.0] * 4), 0)
    assert np.allclose(asr_grad(p, ms[:1], [3.0]), 0)
    with pytest.raises(ValueError):
        asr_grad(p, ms, [1.0, 2.0])


def test_grad_finite_differences():
    rng = np.random.default_rng(4)
    p = AsrParams(16, rng.normal(scale=0.5, size=81))
    assert asr_fd_error(p, triples(rng, 4), rng.uniform(0.1, 3, size=4)) < 1e-4


def test_update_arithmetic():
    p = asr_init(16, 0)
    assert np.array_equal(asr_update(p, np.zeros(81), 0.01).phi, p.phi)
    e = np.zeros(81)
    e[5] = 1.0
    assert np.linalg.norm(asr_update(p, e, 0.01).phi - p.phi) == pytest.approx(0.01)
    with pytest.raises(ValueError):
        asr_update(p, e, 0.0)


def test_descent_on_frozen_episode():
    rng = np.random.default_rng(2)
    ms, losses = triples(rng, 8), rng.uniform(0.5, 3.0, size=8)
    _, trace = asr_descend(asr_init(16, 0), ms, losses, lr=1e-2, steps=50)
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    assert trace[-1] < trace[0] - 1e-6


def test_serialization_round_trip(tmp_path):
    p = asr_init(8, 5)
    p.save(tmp_path / "asr.json")
    q = AsrParams.load(tmp_path / "asr.json")
    assert q.hidden == 8 and np.array_equal(p.phi, q.phi)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10**6))
def test_simplex_and_permutation(n, seed):
    rng = np.random.default_rng(seed)
    p = AsrParams(16, rng.normal(size=81))
    ms = triples(rng, n)
    w = asr_weights(p, ms)
    assert np.all(w > 0) and abs(w.sum() - 1) < 1e-9
    perm = rng.permutation(n)
    assert np.allclose(asr_weights(p, [ms[i] for i in perm]), w[perm])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10**6))
def test_small_step_does_not_increase_objective(n, seed):
    rng = np.random.default_rng(seed)
    p, ms, losses = asr_init(16, seed), triples(rng, n), rng.uniform(0, 5, size=n)
    g = asr_grad(p, ms, losses)
    j0, lr = asr_objective(p, ms, losses), 1e-2
    while asr_objective(asr_update(p, g, lr), ms, losses) > j0 and lr > 1e-6:
        lr /= 2
    assert asr_objective(asr_update(p, g, lr), ms, losses) <= j0 + 1e-15
