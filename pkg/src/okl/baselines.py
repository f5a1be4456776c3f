"""Comparison methods expressed with a fixed output kernel or a fixed input kernel.

* independent: ``L = I``, one kernel ridge regression per task;
* pooled: ``L = e e'``, a single function shared by every task;
* rmf: ``K = I``, regularized matrix factorization through the OKL solver.

Independent and pooled fits are returned as :class:`~okl.solver.OklModel`
too (``A = C, B = I`` and ``A = c, B = e`` respectively), so prediction,
persistence and evaluation are shared with OKL.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from . import kernels
from .linalg import as_mask
from .solver import FactorPair, OklModel, Problem, SolverConfig, block_descent, random_B

KINDS = ('independent', 'pooled', 'rmf')


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    lam: float
    p: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError("unknown baseline %r" % self.kind)
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.kind == 'rmf' and (self.p is None or self.p < 1):
            raise ValueError("rmf needs a rank bound p >= 1")


def _solve_spd(M, b):
    return linalg.solve(M, b, assume_a='pos', check_finite=False)


def fit_independent(K, Y, W, lam):
    """Per-task kernel ridge regression on the observed rows.

    Column ``j`` of the returned ``C`` solves ``(K_SS + lam I) c_S = y_S``
    where ``S`` are the rows observed for task ``j``; other entries are 0.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    K = np.asarray(K, dtype=float)
    Wd = as_mask(W).dense
    Y = np.where(Wd, Y, 0.0)
    C = np.zeros(Y.shape)
    for j in range(Y.shape[1]):
        S = np.flatnonzero(Wd[:, j])
        if S.size == 0:
            continue
        KS = K[np.ix_(S, S)] + lam * np.eye(S.size)
        C[S, j] = _solve_spd(KS, Y[S, j])
    return C


def fit_pooled(K, Y, W, lam):
    """One kernel ridge regression over all observed (input, task) pairs.

    An input observed in ``n_i`` tasks counts ``n_i`` times. Rather than
    duplicating rows, the equivalent weighted system
    ``(N^1/2 K N^1/2 + lam I) u = N^-1/2 s`` with ``c = N^1/2 u`` is solved,
    where ``N`` holds the counts and ``s`` the per-input sums of outputs.
    Returns the coefficient vector ``c`` over the l inputs.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    K = np.asarray(K, dtype=float)
    Wd = as_mask(W).dense
    Y = np.where(Wd, Y, 0.0)
    n = Wd.sum(axis=1).astype(float)
    s = Y.sum(axis=1)
    c = np.zeros(K.shape[0])
    S = np.flatnonzero(n)
    if S.size == 0:
        return c
    r = np.sqrt(n[S])
    M = r[:, None] * K[np.ix_(S, S)] * r[None, :] + lam * np.eye(S.size)
    u = _solve_spd(M, s[S] / r)
    c[S] = r * u
    return c


def independent_model(spec, inputs, Y, W, lam, K=None):
    K = kernels.gram_matrix(spec, inputs) if K is None else K
    C = fit_independent(K, Y, W, lam)
    m = C.shape[1]
    return OklModel(FactorPair(C, np.eye(m)), float(lam), spec, list(inputs),
                    kind='independent')


def pooled_model(spec, inputs, Y, W, lam, K=None):
    K = kernels.gram_matrix(spec, inputs) if K is None else K
    c = fit_pooled(K, Y, W, lam)
    m = np.shape(Y)[1]
    return OklModel(FactorPair(c[:, None], np.ones((m, 1))), float(lam), spec,
                    list(inputs), kind='pooled')


def fit_rmf(Y, W, lam, p, config=None, init=None, inputs=None):
    """Regularized matrix factorization: OKL with the Kronecker delta kernel.

    ``inputs`` label the rows (defaults to ``0..l-1``); predictions at an
    input that is not a training row are zero.
    """
    config = config or SolverConfig()
    Y = np.asarray(Y, dtype=float)
    ell, m = Y.shape
    if inputs is None:
        inputs = [float(i) for i in range(ell)]
    spec = kernels.KernelSpec('kronecker_delta')
    problem = Problem.from_kernel(np.eye(ell), Y, W, p, lam, jitter=0.0,
                                  spec=spec, inputs=list(inputs))
    if init is None:
        rng = np.random.default_rng(config.seed)
        init = FactorPair(np.zeros((ell, p)), random_B(rng, m, p))
    factors, report = block_descent(problem, init, config)
    model = OklModel(factors, float(lam), spec, list(inputs), 0.0, kind='rmf',
                     seed=config.seed)
    return model, report
