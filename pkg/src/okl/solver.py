"""Block coordinate descent for low-rank output kernel learning.

The optimization variables are thin factors ``A`` (l x p) and ``B`` (m x p)
of the objective

    J(A, B) = ||Y - K A B'||_W^2 / (2 lam) + <A, K A>_F / 2 + ||B||_F^2 / 2

from which the coefficient matrix and output kernel are recovered as
``L = B B'`` and ``A = C B``.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import linalg, sparse

from . import kernels
from .linalg import (DimensionMismatch, LinearOperator, Mask, as_mask, cg_solve,
                     cholesky_auto, gmres_solve, masked_product_apply, unvec, vec)

log = logging.getLogger(__name__)

A_SOLVERS = ('cholesky', 'gmres', 'cvar')


class GridNotDescending(ValueError):
    pass


@dataclass(frozen=True)
class Problem:
    """Data of one weighted OKL problem.

    ``F`` is the lower Cholesky factor of the (jittered) input Gram matrix;
    ``K`` is always recomputed as ``F F'`` so every solver sees the same
    kernel. ``Y`` is zero wherever ``W`` is.
    """
    F: np.ndarray
    Y: np.ndarray
    W: Mask
    p: int
    lam: float
    jitter: float = 0.0
    spec: Optional[kernels.KernelSpec] = None
    inputs: Optional[list] = None

    def __post_init__(self):
        ell, m = self.W.shape
        if self.F.shape != (ell, ell) or self.Y.shape != (ell, m):
            raise DimensionMismatch("F %s, Y %s and W %s are inconsistent"
                                    % (self.F.shape, self.Y.shape, self.W.shape))
        if not 1 <= self.p <= m:
            raise ValueError("rank bound p must lie in [1, %d], got %d" % (m, self.p))
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.inputs is not None and len(self.inputs) != ell:
            raise DimensionMismatch("%d inputs for %d rows" % (len(self.inputs), ell))

    @classmethod
    def from_kernel(cls, K, Y, W, p, lam, jitter=None, spec=None, inputs=None):
        W = as_mask(W)
        Y = np.where(W.dense, np.asarray(Y, dtype=float), 0.0)
        F, used = cholesky_auto(K, jitter)
        return cls(F, Y, W, int(p), float(lam), used, spec, inputs)

    @classmethod
    def from_inputs(cls, spec, inputs, Y, W, p, lam, jitter=None):
        K = kernels.gram_matrix(spec, inputs)
        return cls.from_kernel(K, Y, W, p, lam, jitter, spec, list(inputs))

    def with_lambda(self, lam):
        new = replace(self, lam=float(lam))
        # carry the cached Gram matrix over
        if 'K' in self.__dict__:
            new.__dict__['K'] = self.__dict__['K']
        return new

    @cached_property
    def K(self):
        return self.F @ self.F.T

    @property
    def shape(self):
        return self.W.shape


@dataclass
class FactorPair:
    A: np.ndarray
    B: np.ndarray

    def copy(self):
        return FactorPair(self.A.copy(), self.B.copy())


@dataclass
class SolverConfig:
    """Knobs for the subproblem solvers, block descent and the path driver."""
    a_solver: str = 'cholesky'
    tol: float = 1e-8
    max_iter: Optional[int] = None
    restart: int = 50
    rel_obj_tol: float = 1e-6
    max_outer: int = 50
    max_outer_warm: int = 5
    reinit_threshold: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.a_solver not in A_SOLVERS:
            raise ValueError("a_solver must be one of %s" % (A_SOLVERS,))
        if self.tol <= 0 or self.rel_obj_tol < 0:
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.max_outer_warm < 1:
            raise ValueError("max_outer must be at least 1")


PathConfig = SolverConfig


@dataclass
class DescentReport:
    lam: float
    half_steps: list = field(default_factory=list)
    solver_iterations: list = field(default_factory=list)
    solver_residuals: list = field(default_factory=list)
    grad_norms: tuple = (np.nan, np.nan)
    converged: bool = False
    reinitialized: bool = False
    seconds: float = 0.0

    @property
    def objectives(self):
        """Objective after each outer iteration (index 0 is the start)."""
        return self.half_steps[::2]

    @property
    def outer_iterations(self):
        return len(self.half_steps) // 2


@dataclass
class OklModel:
    factors: FactorPair
    lam: float
    spec: kernels.KernelSpec
    train_inputs: list
    jitter: float = 0.0
    kind: str = 'okl'
    seed: Optional[int] = None
    task_names: Optional[list] = None

    def __post_init__(self):
        if self.task_names is not None and len(self.task_names) != self.factors.B.shape[0]:
            raise DimensionMismatch("%d task names for %d tasks"
                                    % (len(self.task_names), self.factors.B.shape[0]))
        if self.factors.A.shape[0] != len(self.train_inputs):
            raise DimensionMismatch("A has %d rows for %d training inputs"
                                    % (self.factors.A.shape[0], len(self.train_inputs)))
        if self.factors.A.shape[1] != self.factors.B.shape[1]:
            raise DimensionMismatch("A and B have different ranks")

    @property
    def p(self):
        return self.factors.B.shape[1]

    @property
    def n_tasks(self):
        return self.factors.B.shape[0]

    def predict(self, x):
        return predict(self, x)

    def predict_many(self, xs):
        return predict_many(self, xs)


def _check(problem, factors):
    ell, m = problem.shape
    p = factors.A.shape[1] if factors.A.ndim == 2 else -1
    if factors.A.shape != (ell, p) or factors.B.shape != (m, p):
        raise DimensionMismatch("A %s and B %s do not fit a %dx%d problem"
                                % (factors.A.shape, factors.B.shape, ell, m))


def objective(problem, factors):
    _check(problem, factors)
    A, B = factors.A, factors.B
    KA = problem.K @ A
    R = problem.W.dense * (problem.Y - KA @ B.T)
    return (np.sum(R * R) / (2 * problem.lam)
            + np.sum(A * KA) / 2 + np.sum(B * B) / 2)


def grad_A(problem, factors):
    _check(problem, factors)
    A, B, K = factors.A, factors.B, problem.K
    R = problem.W.dense * (K @ A @ B.T - problem.Y)
    return K @ (R @ B / problem.lam + A)


def grad_B(problem, factors):
    _check(problem, factors)
    E = problem.K @ factors.A
    R = problem.W.dense * (E @ factors.B.T - problem.Y)
    return R.T @ E / problem.lam + factors.B


def _rowspace_projection(A, B):
    # any optimal A lies in the row space of B; projecting a warm start there
    # cannot increase the objective and keeps rank(B) from creeping up
    P = np.linalg.pinv(B) @ B
    return A @ P


def solve_A_cholesky(problem, B, A_init=None, config=None):
    """A-step through the Cholesky change of variable ``A_F = F' A``.

    Solves the symmetric positive definite equation
    ``F' (W * (F A_F B')) B + lam A_F = F' Y B`` by CG and recovers ``A``
    from ``F' A = A_F``. Returns ``(A, iterations, relres)``.
    """
    config = config or SolverConfig()
    ell, m = problem.shape
    p = B.shape[1]
    F = problem.F
    dim = ell * p
    op = LinearOperator(dim, lambda v: masked_product_apply(F, B, problem.W, problem.lam, v),
                        symmetric_pd=True)
    rhs = vec(F.T @ (problem.Y @ B))
    x0 = None
    if A_init is not None:
        x0 = vec(F.T @ _rowspace_projection(A_init, B))
    a_f, it, res = cg_solve(op, rhs, tol=config.tol, max_iter=config.max_iter, x0=x0)
    A = linalg.solve_triangular(F, unvec(a_f, (ell, p)), trans='T', lower=True,
                                check_finite=False)
    return A, it, res


def _apply_LA(problem, B, a):
    ell, m = problem.shape
    A = unvec(a, (ell, B.shape[1]))
    M = problem.W.dense * ((problem.K @ A) @ B.T)
    return vec(M @ B) + problem.lam * a


def solve_A_gmres(problem, B, A_init=None, config=None):
    """A-step on the non-symmetric equation ``W * (K A B') B + lam A = Y B``."""
    config = config or SolverConfig()
    ell, m = problem.shape
    p = B.shape[1]
    op = LinearOperator(ell * p, lambda v: _apply_LA(problem, B, v))
    rhs = vec(problem.Y @ B)
    x0 = None if A_init is None else vec(_rowspace_projection(A_init, B))
    a, it, res = gmres_solve(op, rhs, tol=config.tol, restart=config.restart,
                             max_iter=config.max_iter, x0=x0)
    return unvec(a, (ell, p)), it, res


def _sparse_C(problem, c):
    ell, m = problem.shape
    W = problem.W
    return sparse.csr_matrix((c, (W.rows, W.cols)), shape=(ell, m))


def solve_A_cvar(problem, B, C_init=None, config=None, return_C=False):
    """A-step through the representation ``A = C B``.

    ``C`` shares the sparsity pattern of ``W`` and solves the symmetric
    positive definite equation ``W * (K (W * C) B B') + lam C = Y``; only its
    observed entries are unknowns. ``C_init`` may be a dense l x m matrix or
    a vector of values at the observed positions.
    """
    config = config or SolverConfig()
    W = problem.W
    K = problem.K
    rows, cols = W.rows, W.cols

    def apply(c):
        E = K @ (_sparse_C(problem, c) @ B)
        return np.einsum('ij,ij->i', E[rows], B[cols]) + problem.lam * c

    op = LinearOperator(W.count, apply, symmetric_pd=True)
    rhs = problem.Y[rows, cols]
    x0 = None
    if C_init is not None:
        C_init = np.asarray(C_init, dtype=float)
        x0 = C_init[rows, cols] if C_init.ndim == 2 else C_init
    c, it, res = cg_solve(op, rhs, tol=config.tol, max_iter=config.max_iter, x0=x0)
    A = np.asarray(_sparse_C(problem, c) @ B)
    if return_C:
        return A, it, res, c
    return A, it, res


def solve_B(problem, A):
    """Closed-form B-step, one ridge regression per task.

    Row ``j`` solves ``(E' diag(w_j) E + lam I) b_j = E' diag(w_j) y_j`` with
    ``E = K A``. A task without observations gets ``b_j = 0``.
    """
    E = problem.K @ A
    ell, p = E.shape
    Wf = problem.W.dense.astype(float)
    outer = (E[:, :, None] * E[:, None, :]).reshape(ell, p * p)
    G = (Wf.T @ outer).reshape(-1, p, p)
    G += problem.lam * np.eye(p)
    rhs = problem.Y.T @ E
    return np.linalg.solve(G, rhs[:, :, None])[:, :, 0]


def solve_A(problem, B, A_init=None, config=None, state=None):
    config = config or SolverConfig()
    if config.a_solver == 'cholesky':
        return solve_A_cholesky(problem, B, A_init, config)
    if config.a_solver == 'gmres':
        return solve_A_gmres(problem, B, A_init, config)
    C_init = None if state is None else state.get('c')
    A, it, res, c = solve_A_cvar(problem, B, C_init, config, return_C=True)
    if state is not None:
        state['c'] = c
    return A, it, res


def random_B(rng, m, p):
    return rng.uniform(0.0, 1.0, size=(m, p))


def block_descent(problem, init, config=None, max_outer=None):
    """Alternate exact minimization over ``A`` and ``B``.

    Each outer iteration re-solves ``A`` first, then ``B``. Stops when the
    relative objective decrease over one outer iteration falls below
    ``config.rel_obj_tol`` or after ``max_outer`` iterations.

    Returns
    -------
    factors : FactorPair
    report : DescentReport
    """
    config = config or SolverConfig()
    max_outer = config.max_outer if max_outer is None else max_outer
    _check(problem, init)
    t0 = time.perf_counter()
    A, B = init.A.copy(), init.B.copy()
    report = DescentReport(lam=problem.lam)
    J = objective(problem, FactorPair(A, B))
    report.half_steps.append(J)
    state = {}
    for _ in range(max_outer):
        J_prev = J
        A, it, res = solve_A(problem, B, A, config, state)
        report.solver_iterations.append(it)
        report.solver_residuals.append(res)
        report.half_steps.append(objective(problem, FactorPair(A, B)))
        B = solve_B(problem, A)
        J = objective(problem, FactorPair(A, B))
        report.half_steps.append(J)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise FloatingPointError("non-finite factors at lambda=%g" % problem.lam)
        if J_prev - J <= config.rel_obj_tol * max(abs(J_prev), np.finfo(float).tiny):
            report.converged = True
            break
    factors = FactorPair(A, B)
    report.grad_norms = (np.linalg.norm(grad_A(problem, factors)),
                         np.linalg.norm(grad_B(problem, factors)))
    report.seconds = time.perf_counter() - t0
    if not report.converged:
        log.info("block descent hit max_outer=%d at lambda=%g", max_outer, problem.lam)
    return factors, report


def default_grid(Y, W=None, count=30, decades=5.0):
    """Decreasing log-spaced grid starting at ``||Y||_F^2 / l``."""
    Y = np.asarray(Y, dtype=float)
    top = np.sum(Y * Y) / Y.shape[0]
    if top <= 0:
        top = 1.0
    return np.logspace(np.log10(top), np.log10(top) - decades, count)


@dataclass
class PathPoint:
    lam: float
    model: OklModel
    report: DescentReport

    def __iter__(self):
        return iter((self.lam, self.model, self.report))


def reg_path(problem, grid, config=None, init=None):
    """Warm-started regularization path over a strictly decreasing grid.

    ``B`` starts from a uniform [0, 1] draw and is redrawn whenever its
    Frobenius norm drops below ``reinit_threshold * sqrt(m p)``. A fit that
    starts from a fresh ``B`` gets ``max_outer`` iterations, a warm one
    ``max_outer_warm``.
    """
    config = config or SolverConfig()
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a nonempty 1-D sequence")
    if np.any(grid <= 0):
        raise ValueError("grid values must be positive")
    if np.any(np.diff(grid) >= 0):
        raise GridNotDescending("lambda grid must be strictly decreasing")

    ell, m = problem.shape
    p = problem.p
    rng = np.random.default_rng(config.seed)
    threshold = config.reinit_threshold * np.sqrt(m * p)
    spec = problem.spec or kernels.KernelSpec('kronecker_delta')
    inputs = problem.inputs if problem.inputs is not None else [float(i) for i in range(ell)]

    if init is None:
        current = FactorPair(np.zeros((ell, p)), random_B(rng, m, p))
        fresh = True
    else:
        current = init.copy()
        fresh = False

    out = []
    for lam in grid:
        prob = problem.with_lambda(lam)
        reinit = False
        if np.linalg.norm(current.B) < threshold:
            current = FactorPair(current.A, random_B(rng, m, p))
            fresh = reinit = True
        budget = config.max_outer if fresh else config.max_outer_warm
        try:
            current, report = block_descent(prob, current, config, max_outer=budget)
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("fit failed at lambda=%g: %s", lam, exc)
            report = DescentReport(lam=float(lam))
            current = FactorPair(np.zeros((ell, p)), random_B(rng, m, p))
            fresh = True
            continue
        report.reinitialized = reinit
        model = OklModel(current.copy(), float(lam), spec, inputs, problem.jitter,
                         seed=config.seed)
        out.append(PathPoint(float(lam), model, report))
        fresh = False
    return out


def recover_CL(model):
    """Coefficients ``C = A B^+`` and output kernel ``L = B B'``."""
    f = model.factors if isinstance(model, OklModel) else model
    L = f.B @ f.B.T
    C = f.A @ np.linalg.pinv(f.B)
    return C, L


def predict_many(model, xs):
    Kx = kernels.cross_gram(model.spec, xs, model.train_inputs)
    return (Kx @ model.factors.A) @ model.factors.B.T


def predict(model, x):
    return predict_many(model, [x])[0]


def train_predictions(problem, factors):
    return problem.K @ factors.A @ factors.B.T
