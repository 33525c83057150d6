import numpy as np
import pytest

from sparsink import kernel_from_cost, new_measure, sq_euclidean_cost


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_instance(rng, n, d=2, eps=0.5, mass=(1.0, 1.0)):
    """Random weights on uniform points with a squared Euclidean kernel."""
    x = rng.random((n, d))
    a = rng.random(n) + 0.05
    b = rng.random(n) + 0.05
    a = mass[0] * a / a.sum()
    b = mass[1] * b / b.sum()
    K = kernel_from_cost(sq_euclidean_cost(x), eps)
    return new_measure(a, x), new_measure(b, x), K
