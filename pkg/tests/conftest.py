import numpy as np
import pytest

from okl.linalg import Mask
from okl.solver import FactorPair, Problem


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.geomspace(1.0, cond, n)
    return (Q * w) @ Q.T


def random_problem(rng, ell=6, m=4, p=2, lam=0.7, density=0.6, full=False, psd_rank=None):
    X = rng.standard_normal((ell, psd_rank or ell))
    K = X @ X.T / X.shape[1] + 0.1 * np.eye(ell)
    W = np.ones((ell, m), dtype=bool) if full else rng.random((ell, m)) < density
    W[0, :] = True  # every task sees at least one input
    Y = rng.standard_normal((ell, m)) * W
    return Problem.from_kernel(K, Y, Mask.from_dense(W), p, lam)


def random_factors(rng, problem):
    ell, m = problem.shape
    return FactorPair(rng.standard_normal((ell, problem.p)), rng.standard_normal((m, problem.p)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
