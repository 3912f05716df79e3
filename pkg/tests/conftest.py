import numpy as np
import pytest

from episample.tasks import CLASSIFICATION, REGRESSION, Task


def make_cls_task(way=2, shots=1, n_query=1, d=3, seed=0, index=0):
    rng = np.random.default_rng(seed)
    sy = np.repeat(np.arange(way), shots)
    qy = np.repeat(np.arange(way), n_query)
    return Task(rng.normal(size=(len(sy), d)), sy, rng.normal(size=(len(qy), d)), qy,
                CLASSIFICATION, tuple(range(way)), index)


def make_reg_task(n_support=3, n_query=3, d=1, seed=0, index=0):
    rng = np.random.default_rng(seed)
    return Task(rng.normal(size=(n_support, d)), rng.normal(size=n_support),
                rng.normal(size=(n_query, d)), rng.normal(size=n_query), REGRESSION, (index,), index)


@pytest.fixture
def cls_task():
    return make_cls_task()


@pytest.fixture
def reg_task():
    return make_reg_task()
