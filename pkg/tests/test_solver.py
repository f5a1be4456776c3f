import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from okl.kernels import KernelSpec
from okl.linalg import DimensionMismatch, LinearOperator, cg_solve, sqrt_psd, unvec, vec
from okl.solver import (FactorPair, GridNotDescending, OklModel, Problem, SolverConfig,
                        block_descent, default_grid, grad_A, grad_B, objective, predict_many,
                        recover_CL, reg_path, solve_A, solve_A_cholesky, solve_A_cvar,
                        solve_A_gmres, solve_B, train_predictions)

from conftest import random_factors, random_problem

seeds = st.integers(0, 2**32 - 1)
A_STEPS = (solve_A_cholesky, solve_A_gmres, solve_A_cvar)


def scalar_problem(y=1.0, lam=1.0):
    return Problem.from_kernel(np.eye(1), [[y]], [[True]], 1, lam, jitter=0.0)


def objective_CL(problem, C, L):
    """Objective in the coefficient/output-kernel variables."""
    K = problem.K
    R = problem.W.dense * (problem.Y - K @ C @ L)
    return (np.sum(R * R) / (2 * problem.lam)
            + np.trace(C.T @ K @ C @ L) / 2 + np.trace(L) / 2)


def fd_gradient(f, X, h=1e-6):
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        G[idx] = (f(X + E) - f(X - E)) / (2 * h)
    return G


def numerical_rank(B):
    s = np.linalg.svd(B, compute_uv=False)
    return int(np.sum(s > 1e-8 * s[0])) if s.size and s[0] > 0 else 0


# -- objective ----------------------------------------------------------------

def test_objective_at_origin(rng):
    pb = random_problem(rng)
    ell, m = pb.shape
    zero = FactorPair(np.zeros((ell, 2)), np.zeros((m, 2)))
    assert objective(pb, zero) == pytest.approx(np.sum(pb.Y ** 2) / (2 * pb.lam))


def test_objective_scalar():
    assert objective(scalar_problem(), FactorPair(np.ones((1, 1)), np.ones((1, 1)))) == 1.0


def test_objective_dimension_mismatch(rng):
    pb = random_problem(rng)
    with pytest.raises(DimensionMismatch):
        objective(pb, FactorPair(np.zeros((3, 2)), np.zeros((4, 2))))


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_objective_orthogonal_invariance(seed):
    rng = np.random.default_rng(seed)
    pb = random_problem(rng, p=3)
    f = random_factors(rng, pb)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    J = objective(pb, f)
    Jq = objective(pb, FactorPair(f.A @ Q, f.B @ Q))
    assert abs(J - Jq) <= 1e-10 * max(1.0, abs(J))


def test_imputation_zeroes_unobserved():
    pb = Problem.from_kernel(np.eye(2), [[1., 7.], [3., 4.]], [[1, 0], [1, 1]], 1, 1.0)
    assert pb.Y[0, 1] == 0.0


def test_problem_validation():
    with pytest.raises(ValueError):
        Problem.from_kernel(np.eye(2), np.zeros((2, 2)), np.ones((2, 2)), 3, 1.0)
    with pytest.raises(ValueError):
        Problem.from_kernel(np.eye(2), np.zeros((2, 2)), np.ones((2, 2)), 1, 0.0)


# -- gradients ----------------------------------------------------------------

def test_gradients_vanish_at_origin(rng):
    pb = random_problem(rng)
    zero = FactorPair(np.zeros((6, 2)), np.zeros((4, 2)))
    assert not grad_A(pb, zero).any()
    assert not grad_B(pb, zero).any()


def test_gradient_scalar_fd():
    pb = scalar_problem(y=2.0, lam=0.5)
    f = FactorPair(np.array([[0.3]]), np.array([[-1.2]]))
    gA = fd_gradient(lambda A: objective(pb, FactorPair(A, f.B)), f.A)
    gB = fd_gradient(lambda B: objective(pb, FactorPair(f.A, B)), f.B)
    assert np.allclose(grad_A(pb, f), gA, rtol=1e-5, atol=1e-8)
    assert np.allclose(grad_B(pb, f), gB, rtol=1e-5, atol=1e-8)


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    pb = random_problem(rng, ell=4, m=3, p=2, lam=float(rng.uniform(0.2, 2.0)))
    f = random_factors(rng, pb)
    gA = fd_gradient(lambda A: objective(pb, FactorPair(A, f.B)), f.A)
    gB = fd_gradient(lambda B: objective(pb, FactorPair(f.A, B)), f.B)
    assert np.linalg.norm(grad_A(pb, f) - gA) <= 1e-5 * max(1.0, np.linalg.norm(gA))
    assert np.linalg.norm(grad_B(pb, f) - gB) <= 1e-5 * max(1.0, np.linalg.norm(gB))


# -- A-step ---------------------------------------------------------------------

def dense_A_oracle(pb, B):
    """Solve W*(K A B')B + lam A = Y B with an explicit Kronecker matrix."""
    ell, m = pb.shape
    p = B.shape[1]
    WD = np.diag(vec(pb.W.dense).astype(float))
    L = np.kron(B.T, np.eye(ell)) @ WD @ np.kron(B, pb.K) + pb.lam * np.eye(ell * p)
    return unvec(np.linalg.solve(L, vec(pb.Y @ B)), (ell, p))


def optimality_residual(pb, A, B):
    M = pb.W.dense * (pb.K @ A @ B.T)
    return np.linalg.norm(M @ B + pb.lam * A - pb.Y @ B)


@pytest.mark.parametrize('step', A_STEPS)
def test_A_step_zero_B(step, rng):
    pb = random_problem(rng)
    A, _, _ = step(pb, np.zeros((4, 2)))
    assert not A.any()


@pytest.mark.parametrize('step', A_STEPS)
def test_A_step_scalar(step):
    y, b, lam = 3.0, 2.0, 0.5
    pb = scalar_problem(y, lam)
    A, _, _ = step(pb, np.array([[b]]))
    assert A[0, 0] == pytest.approx(y * b / (b * b + lam), rel=1e-12)


@pytest.mark.parametrize('step', A_STEPS)
def test_A_step_matches_dense_oracle(step, rng):
    pb = random_problem(rng, ell=7, m=4, p=3)
    B = rng.standard_normal((4, 3))
    A, _, _ = step(pb, B, None, SolverConfig(tol=1e-12))
    ref = dense_A_oracle(pb, B)
    assert np.linalg.norm(pb.K @ (A - ref)) <= 1e-8 * (1 + np.linalg.norm(pb.K @ ref))
    assert optimality_residual(pb, A, B) <= 1e-8 * (1 + np.linalg.norm(pb.Y @ B))


@given(seeds)
@settings(max_examples=20, deadline=None)
def test_A_step_variants_agree(seed):
    rng = np.random.default_rng(seed)
    ell, m = int(rng.integers(3, 15)), int(rng.integers(2, 7))
    p = int(rng.integers(1, m + 1))
    pb = random_problem(rng, ell=ell, m=m, p=p, lam=float(rng.uniform(0.05, 3.0)),
                        psd_rank=max(1, ell // 2))
    B = rng.standard_normal((m, p))
    cfg = SolverConfig(tol=1e-12, max_iter=2000)
    KA = [pb.K @ step(pb, B, None, cfg)[0] for step in A_STEPS]
    for other in KA[1:]:
        assert np.linalg.norm(KA[0] - other) <= 1e-5 * (1 + np.linalg.norm(KA[0]))


def test_cvar_warm_start_accepts_dense_C(rng):
    pb = random_problem(rng)
    B = rng.standard_normal((4, 2))
    A, it0, _, c = solve_A_cvar(pb, B, return_C=True)
    C = np.zeros(pb.shape)
    C[pb.W.rows, pb.W.cols] = c
    A2, it, _ = solve_A_cvar(pb, B, C_init=C)
    assert np.allclose(A, A2, atol=1e-8) and it <= 1


def test_A_step_warm_start_needs_fewer_iterations(rng):
    pb = random_problem(rng, ell=20, m=6, p=3)
    B = rng.standard_normal((6, 3))
    A, cold, _ = solve_A_cholesky(pb, B)
    _, warm, _ = solve_A_cholesky(pb, B, A_init=A)
    assert warm < cold


# -- B-step ---------------------------------------------------------------------

def test_B_step_scalar_example():
    pb = Problem.from_kernel(np.eye(2), [[2.], [0.]], [[True], [False]], 1, 1.0, jitter=0.0)
    B = solve_B(pb, np.array([[1.], [1.]]))
    assert B[0, 0] == pytest.approx(1.0, rel=1e-12)


def test_B_step_unobserved_task_is_zero(rng):
    W = np.ones((5, 3), dtype=bool)
    W[:, 1] = False
    pb = Problem.from_kernel(np.eye(5), rng.standard_normal((5, 3)), W, 2, 0.5)
    B = solve_B(pb, rng.standard_normal((5, 2)))
    assert not B[1].any()


def test_B_step_matches_rowwise_normal_equations(rng):
    pb = random_problem(rng, ell=8, m=5, p=3)
    A = rng.standard_normal((8, 3))
    B = solve_B(pb, A)
    E = pb.K @ A
    for j in range(5):
        w = pb.W.dense[:, j].astype(float)
        G = E.T @ (w[:, None] * E) + pb.lam * np.eye(3)
        rhs = E.T @ (w * pb.Y[:, j])
        assert np.linalg.norm(G @ B[j] - rhs) <= 1e-10 * (1 + np.linalg.norm(rhs))


def test_B_step_matches_operator_equation(rng):
    pb = random_problem(rng, ell=8, m=5, p=3)
    A = rng.standard_normal((8, 3))
    E = pb.K @ A
    W = pb.W.dense

    def apply(v):
        Bm = unvec(v, (5, 3))
        return vec((W * (E @ Bm.T)).T @ E) + pb.lam * v

    b, _, _ = cg_solve(LinearOperator(15, apply, symmetric_pd=True), vec(pb.Y.T @ E),
                       tol=1e-13, max_iter=500)
    assert np.max(np.abs(solve_B(pb, A) - unvec(b, (5, 3)))) <= 1e-8


def test_B_step_is_exact_minimizer(rng):
    pb = random_problem(rng)
    A = rng.standard_normal((6, 2))
    B = solve_B(pb, A)
    assert np.linalg.norm(grad_B(pb, FactorPair(A, B))) <= 1e-10


# -- invariants from the equivalent formulations ------------------------------------

@given(seeds)
@settings(max_examples=25, deadline=None)
def test_factorized_objective_equals_CL_objective(seed):
    rng = np.random.default_rng(seed)
    pb = random_problem(rng, ell=6, m=5, p=3, lam=float(rng.uniform(0.1, 3)))
    f = random_factors(rng, pb)
    C = f.A @ np.linalg.pinv(f.B)
    L = f.B @ f.B.T
    J4, J2 = objective(pb, f), objective_CL(pb, C, L)
    assert abs(J4 - J2) <= 1e-8 * max(1.0, abs(J4))


def output_kernel_penalty(M, L):
    return np.trace(M @ np.linalg.pinv(L)) / 2 + np.trace(L) / 2


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_square_root_minimizes_output_kernel_penalty(seed):
    rng = np.random.default_rng(seed)
    ell, m, p = 6, 5, int(rng.integers(1, 5))
    X = rng.standard_normal((ell, ell))
    K = X @ X.T + 0.1 * np.eye(ell)
    theta = rng.standard_normal((ell, p)) @ rng.standard_normal((p, m))
    M = theta.T @ K @ theta
    S = sqrt_psd(M)
    best = output_kernel_penalty(M, S)
    assert abs(best - np.trace(S)) <= 1e-7 * max(1.0, np.trace(S))
    # perturbations within the range of M cannot do better
    U = np.linalg.svd(theta.T, full_matrices=False)[0][:, :p]
    for _ in range(5):
        G = rng.standard_normal((p, p))
        L = S + 0.3 * U @ (G @ G.T) @ U.T
        assert output_kernel_penalty(M, L) >= best - 1e-7 * max(1.0, best)


@given(seeds)
@settings(max_examples=25, deadline=None)
def test_identity_kernel_gives_nuclear_norm(seed):
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((7, 3)) @ rng.standard_normal((3, 5))
    nuc = np.linalg.svd(theta, compute_uv=False).sum()
    assert abs(np.trace(sqrt_psd(theta.T @ theta)) - nuc) <= 1e-8 * max(1.0, nuc)


def test_full_weight_operator_reduction(rng):
    from okl.solver import _apply_LA
    pb = random_problem(rng, ell=5, m=4, p=2, full=True)
    B = rng.standard_normal((4, 2))
    a = rng.standard_normal(10)
    reduced = np.kron(B.T @ B, pb.K) + pb.lam * np.eye(10)
    assert np.max(np.abs(_apply_LA(pb, B, a) - reduced @ a)) <= 1e-10


# -- block descent ----------------------------------------------------------------

def check_monotone(report):
    hs = report.half_steps
    return all(b <= a + 1e-9 for a, b in zip(hs, hs[1:]))


@given(seeds, st.sampled_from(('cholesky', 'gmres', 'cvar')))
@settings(max_examples=20, deadline=None)
def test_descent_monotone_on_random_instances(seed, solver):
    rng = np.random.default_rng(seed)
    ell, m = int(rng.integers(2, 31)), int(rng.integers(1, 11))
    p = int(rng.integers(1, min(4, m) + 1))
    pb = random_problem(rng, ell=ell, m=m, p=p, lam=float(10 ** rng.uniform(-2, 1)),
                        density=float(rng.uniform(0.2, 1.0)))
    init = FactorPair(np.zeros((ell, p)), rng.uniform(size=(m, p)))
    _, report = block_descent(pb, init, SolverConfig(a_solver=solver, tol=1e-10), max_outer=15)
    assert check_monotone(report)


def test_rank_of_B_never_increases(rng):
    for trial in range(10):
        pb = random_problem(rng, ell=15, m=8, p=4, lam=float(10 ** rng.uniform(-1, 1)))
        B = rng.uniform(size=(8, 4))
        A = np.zeros((15, 4))
        ranks = [numerical_rank(B)]
        for _ in range(15):
            A, _, _ = solve_A(pb, B, A, SolverConfig(tol=1e-12))
            B = solve_B(pb, A)
            ranks.append(numerical_rank(B))
        assert all(b <= a for a, b in zip(ranks, ranks[1:])), ranks


def test_huge_lambda_goes_to_origin(rng):
    pb = random_problem(rng)
    pb = pb.with_lambda(1e3 * np.sum(pb.Y ** 2) + 1)
    init = FactorPair(np.zeros((6, 2)), rng.uniform(size=(4, 2)))
    f, _ = block_descent(pb, init)
    origin = FactorPair(np.zeros((6, 2)), np.zeros((4, 2)))
    assert objective(pb, f) <= objective(pb, origin) + 1e-9
    assert np.linalg.norm(f.B) < 1e-3


def test_full_weight_reaches_stationary_point(rng):
    pb = random_problem(rng, ell=6, m=3, p=3, lam=0.3, full=True)
    init = FactorPair(np.zeros((6, 3)), rng.uniform(size=(3, 3)))
    f, report = block_descent(pb, init, SolverConfig(tol=1e-12, rel_obj_tol=1e-15),
                              max_outer=3000)
    assert max(report.grad_norms) <= 1e-5


def test_stationary_start_returns_immediately(rng):
    pb = random_problem(rng)
    zero = FactorPair(np.zeros((6, 2)), np.zeros((4, 2)))
    f, report = block_descent(pb, zero)
    assert report.outer_iterations == 1 and report.converged
    assert not f.A.any() and not f.B.any()


# -- regularization path ------------------------------------------------------------

def test_default_grid():
    Y = np.full((4, 2), 2.0)
    g = default_grid(Y)
    assert len(g) == 30 and g[0] == pytest.approx(8.0) and g[-1] == pytest.approx(8e-5)
    assert np.all(np.diff(g) < 0)


def test_path_rejects_ascending_grid(rng):
    pb = random_problem(rng)
    with pytest.raises(GridNotDescending):
        reg_path(pb, [0.1, 1.0])


def test_single_point_path_matches_block_descent(rng):
    pb = random_problem(rng)
    cfg = SolverConfig(seed=3)
    (pt,) = reg_path(pb, [0.5], cfg)
    B0 = np.random.default_rng(3).uniform(size=(4, 2))
    f, _ = block_descent(pb.with_lambda(0.5), FactorPair(np.zeros((6, 2)), B0), cfg)
    assert np.allclose(pt.model.factors.A, f.A) and np.allclose(pt.model.factors.B, f.B)


def test_warm_start_is_cheaper_than_cold(rng):
    pb = random_problem(rng, ell=20, m=6, p=3, density=0.7)
    grid = [1.0, 0.9]
    path = reg_path(pb, grid, SolverConfig(max_outer_warm=50))
    cold = reg_path(pb, [0.9], SolverConfig(seed=7))
    assert path[1].report.outer_iterations <= cold[0].report.outer_iterations
    assert sum(path[1].report.solver_iterations) < sum(cold[0].report.solver_iterations)


def test_path_reinitializes_collapsed_B(rng):
    pb = random_problem(rng)
    big = 1e4 * np.sum(pb.Y ** 2)
    path = reg_path(pb, [big, big / 2, 0.1])
    assert path[1].report.reinitialized
    assert np.linalg.norm(path[2].model.factors.B) > 0


# -- recovery and prediction ----------------------------------------------------------

def test_recover_identity_B(rng):
    A = rng.standard_normal((4, 3))
    C, L = recover_CL(FactorPair(A, np.eye(3)))
    assert np.allclose(L, np.eye(3)) and np.allclose(C, A)


def test_recover_rank_one():
    C, L = recover_CL(FactorPair(np.ones((2, 1)), np.array([[1.], [2.]])))
    assert np.array_equal(L, [[1., 2.], [2., 4.]]) and np.trace(L) == 5.0


def test_recover_rank_deficient_projects(rng):
    B = np.column_stack([np.ones(4), np.ones(4)])
    A = rng.standard_normal((3, 2))
    C, L = recover_CL(FactorPair(A, B))
    P = np.linalg.pinv(B) @ B
    assert np.allclose(C @ B, A @ P)
    assert np.linalg.eigvalsh(L).min() > -1e-12


def _model(A, B, spec, inputs):
    return OklModel(FactorPair(A, B), 1.0, spec, inputs)


def test_predict_zero_B():
    m = _model(np.ones((3, 2)), np.zeros((4, 2)), KernelSpec('linear_spline'), [0., 1., 2.])
    assert not m.predict(0.5).any() and m.predict(0.5).shape == (4,)


def test_predict_delta_kernel_returns_row(rng):
    A, B = rng.standard_normal((3, 2)), rng.standard_normal((4, 2))
    m = _model(A, B, KernelSpec('kronecker_delta'), [0., 1., 2.])
    assert np.allclose(m.predict(1.0), (A @ B.T)[1])


def test_predict_on_training_inputs_equals_KABt(rng):
    inputs = list(np.linspace(0, 1, 6))
    pb = Problem.from_inputs(KernelSpec('exp_covariance'), inputs, rng.standard_normal((6, 3)),
                             np.ones((6, 3)), 2, 0.5, jitter=0.0)
    f = random_factors(rng, pb)
    m = _model(f.A, f.B, pb.spec, inputs)
    assert np.max(np.abs(predict_many(m, inputs) - train_predictions(pb, f))) <= 1e-10


def test_model_dimension_checks(rng):
    with pytest.raises(DimensionMismatch):
        _model(np.ones((3, 2)), np.ones((4, 2)), KernelSpec('linear_spline'), [0., 1.])
