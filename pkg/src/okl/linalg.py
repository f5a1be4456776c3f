"""Dense factorizations and matrix-free Krylov solvers.

Vectors that represent matrices always use column-major (Fortran) stacking,
so that ``vec(A X B) == kron(B.T, A) @ vec(X)``.
"""

import numpy as np
from scipy import linalg


class LinalgError(ValueError):
    pass


class NotSymmetric(LinalgError):
    pass


class IndefiniteEvenWithJitter(LinalgError):
    pass


class IndefiniteMatrix(LinalgError):
    pass


class NonFiniteEncountered(ArithmeticError):
    pass


class StagnationDetected(ArithmeticError):
    pass


class DimensionMismatch(ValueError):
    pass


def vec(X):
    return np.asarray(X).reshape(-1, order='F')


def unvec(x, shape):
    return np.asarray(x).reshape(shape, order='F')


class LinearOperator:
    """Square operator on R^dim given by a function ``apply``.

    ``symmetric_pd`` is a promise made by the caller; :func:`cg_solve`
    refuses operators that do not make it.
    """

    def __init__(self, dim, apply, symmetric_pd=False):
        self.dim = int(dim)
        self.apply = apply
        self.symmetric_pd = symmetric_pd

    def __call__(self, v):
        return self.apply(v)

    @classmethod
    def from_matrix(cls, M, symmetric_pd=False):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionMismatch("operator matrix must be square, got %s" % (M.shape,))
        return cls(M.shape[0], M.dot, symmetric_pd=symmetric_pd)


def _as_operator(op, symmetric_pd=False):
    if isinstance(op, LinearOperator):
        return op
    if callable(op):
        raise TypeError("wrap plain callables in LinearOperator to give a dimension")
    return LinearOperator.from_matrix(op, symmetric_pd=symmetric_pd)


class Mask:
    """Binary weight matrix, stored as its observed (i, j) positions.

    As an operator on vec'd matrices it is ``diag(vec(W))``.
    """

    def __init__(self, rows, cols, shape):
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        if rows.shape != cols.shape:
            raise DimensionMismatch("rows and cols must have equal length")
        n, m = shape
        if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
            raise DimensionMismatch("observed position outside shape %s" % (shape,))
        dense = np.zeros(shape, dtype=bool)
        dense[rows, cols] = True
        self.shape = (int(n), int(m))
        self._dense = dense
        # canonical column-major order of the positions
        self.rows, self.cols = (a.astype(np.intp) for a in np.nonzero(dense.T)[::-1])
        self._dense.setflags(write=False)

    @classmethod
    def from_dense(cls, W):
        W = np.asarray(W)
        if W.ndim != 2:
            raise DimensionMismatch("weight matrix must be 2-D")
        rows, cols = np.nonzero(W)
        return cls(rows, cols, W.shape)

    @classmethod
    def full(cls, shape):
        return cls.from_dense(np.ones(shape, dtype=bool))

    @property
    def dense(self):
        return self._dense

    @property
    def count(self):
        return self.rows.size

    @property
    def flat_index(self):
        """Indices of the observed entries inside ``vec(W)``."""
        return self.rows + self.cols * self.shape[0]

    def apply(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.shape[0] * self.shape[1],):
            raise DimensionMismatch("expected vector of length %d" % (self.shape[0] * self.shape[1]))
        return v * vec(self._dense)

    __call__ = apply

    def __and__(self, other):
        return Mask.from_dense(self._dense & _dense_of(other))

    def __or__(self, other):
        return Mask.from_dense(self._dense | _dense_of(other))

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._dense, other._dense)

    def __repr__(self):
        return "Mask(shape=%s, observed=%d)" % (self.shape, self.count)


def _dense_of(W):
    return W.dense if isinstance(W, Mask) else np.asarray(W, dtype=bool)


def as_mask(W):
    return W if isinstance(W, Mask) else Mask.from_dense(W)


def _check_symmetric(K, rtol=1e-10):
    scale = np.max(np.abs(K)) if K.size else 0.0
    if np.max(np.abs(K - K.T)) > rtol * scale:
        raise NotSymmetric("matrix is not symmetric within %.1e relative tolerance" % rtol)


def cholesky_psd(K, jitter=0.0):
    """Lower Cholesky factor ``F`` with ``K + jitter * I = F @ F.T``.

    Raises :class:`IndefiniteEvenWithJitter` when a pivot is not positive;
    callers retry with a larger jitter (see :func:`cholesky_auto`).
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
        raise DimensionMismatch("expected a nonempty square matrix, got %s" % (K.shape,))
    if not np.all(np.isfinite(K)):
        raise NonFiniteEncountered("kernel matrix has non-finite entries")
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    _check_symmetric(K)
    Kj = 0.5 * (K + K.T)
    Kj[np.diag_indices_from(Kj)] += jitter
    try:
        F = linalg.cholesky(Kj, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise IndefiniteEvenWithJitter(
            "non-positive pivot with jitter=%g; increase jitter" % jitter) from exc
    return F


def cholesky_auto(K, jitter=None, max_jitter=None):
    """Jittered Cholesky with an escalating jitter schedule.

    Starts at ``1e-10 * mean(diag(K))`` and doubles on failure up to
    ``1e-4 * mean(diag(K))``. Returns ``(F, jitter_used)``.
    """
    K = np.asarray(K, dtype=float)
    scale = float(np.mean(np.diag(K)))
    if scale <= 0:
        scale = 1.0
    j = 1e-10 * scale if jitter is None else float(jitter)
    top = 1e-4 * scale if max_jitter is None else float(max_jitter)
    while True:
        try:
            return cholesky_psd(K, j), j
        except IndefiniteEvenWithJitter:
            if j >= top:
                raise
            j = min(2.0 * j if j > 0 else 1e-10 * scale, top)


def sqrt_psd(M):
    """Symmetric PSD square root through an eigendecomposition.

    Eigenvalues within ``1e-10 * trace`` of zero are clipped to zero.
    """
    M = np.asarray(M, dtype=float)
    _check_symmetric(M)
    M = 0.5 * (M + M.T)
    w, V = linalg.eigh(M)
    floor = 1e-10 * max(abs(np.trace(M)), np.finfo(float).tiny)
    if w.min(initial=0.0) < -floor:
        raise IndefiniteMatrix("eigenvalue %.3e below clipping floor" % w.min())
    w = np.where(w > floor, w, 0.0)
    return (V * np.sqrt(w)) @ V.T


def default_max_iter(dim):
    return int(min(2000, max(10, np.ceil(10 * np.sqrt(dim)))))


def cg_solve(op, rhs, tol=1e-8, max_iter=None, x0=None, preconditioner=None, callback=None):
    """Conjugate gradients with minimal-residual smoothing.

    The returned iterate is the smoothed one, whose residual norm never
    increases. For a symmetric positive definite operator each smoothed
    iterate is a convex combination of CG iterates, so the quadratic
    ``x'Ax/2 - b'x`` never rises above its value at ``x0`` either.

    Parameters
    ----------
    op : LinearOperator or ndarray
        Must be flagged ``symmetric_pd``; an ndarray is taken as such.
    rhs : ndarray
    tol : float
        Stop once ``||op(x) - rhs|| <= tol * ||rhs||``.
    max_iter : int, optional
        Defaults to ``10 * sqrt(dim)`` capped at 2000.
    x0 : ndarray, optional
        Warm start.
    preconditioner : callable, optional
        Not supported yet; must be ``None``.
    callback : callable, optional
        Called as ``callback(k, x, relres)`` after every iteration.

    Returns
    -------
    x, iterations, relres
    """
    op = _as_operator(op, symmetric_pd=True)
    if not op.symmetric_pd:
        raise ValueError("cg_solve needs an operator flagged symmetric_pd")
    if preconditioner is not None:
        raise NotImplementedError("preconditioned CG is not implemented")
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(rhs, dtype=float)
    if b.shape != (op.dim,):
        raise DimensionMismatch("rhs has shape %s, operator dim is %d" % (b.shape, op.dim))
    if max_iter is None:
        max_iter = default_max_iter(op.dim)

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - op(x) if x0 is not None else b.copy()
    xs, rs = x.copy(), r.copy()
    rs_norm = np.linalg.norm(rs)
    if not np.isfinite(rs_norm):
        raise NonFiniteEncountered("non-finite residual at start")
    if rs_norm <= tol * bnorm:
        return xs, 0, rs_norm / bnorm

    d = r.copy()
    rr = r @ r
    k = 0
    while k < max_iter:
        k += 1
        q = op(d)
        dq = d @ q
        if not np.isfinite(dq):
            raise NonFiniteEncountered("non-finite curvature at iteration %d" % k)
        if dq <= 0:
            # breakdown: operator not positive definite along d
            break
        alpha = rr / dq
        x += alpha * d
        r -= alpha * q
        rr_new = r @ r

        # minimal residual smoothing
        dr = r - rs
        drdr = dr @ dr
        if drdr > 0:
            eta = -(rs @ dr) / drdr
            xs += eta * (x - xs)
            rs += eta * dr
        rs_norm = np.linalg.norm(rs)
        if not np.isfinite(rs_norm) or not np.isfinite(rr_new):
            raise NonFiniteEncountered("non-finite iterate at iteration %d" % k)
        if callback is not None:
            callback(k, xs, rs_norm / bnorm)
        if rs_norm <= tol * bnorm:
            break
        d = r + (rr_new / rr) * d
        rr = rr_new
    return xs, k, rs_norm / bnorm


def gmres_solve(op, rhs, tol=1e-8, restart=50, max_iter=None, x0=None, callback=None):
    """Restarted GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

    ``max_iter`` bounds the total number of inner iterations over all
    restart cycles. Raises :class:`StagnationDetected` when a whole cycle
    lowers the relative residual by less than 1e-14.

    Returns
    -------
    x, iterations, relres
    """
    op = _as_operator(op)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if restart < 1:
        raise ValueError("restart must be at least 1")
    b = np.asarray(rhs, dtype=float)
    n = op.dim
    if b.shape != (n,):
        raise DimensionMismatch("rhs has shape %s, operator dim is %d" % (b.shape, n))
    if max_iter is None:
        max_iter = default_max_iter(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    m = min(restart, n)
    total = 0
    r = b - op(x)
    relres = np.linalg.norm(r) / bnorm
    while True:
        if not np.isfinite(relres):
            raise NonFiniteEncountered("non-finite residual after %d iterations" % total)
        if relres <= tol or total >= max_iter:
            return x, total, relres
        beta = relres * bnorm
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j = 0
        while j < m and total < max_iter:
            w = op(V[j])
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w = w - H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            if not np.all(np.isfinite(H[:j + 2, j])):
                raise NonFiniteEncountered("non-finite Arnoldi vector at iteration %d" % (total + 1))
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j += 1
            lucky = denom == 0.0 or np.linalg.norm(w) <= 1e-14 * beta
            if callback is not None:
                callback(total, None, abs(g[j]) / bnorm)
            if abs(g[j]) <= tol * bnorm or lucky:
                break
            V[j] = w / np.linalg.norm(w)
        y = linalg.solve_triangular(H[:j, :j], g[:j], check_finite=False) if j else np.zeros(0)
        x = x + V[:j].T @ y
        r = b - op(x)
        new_relres = np.linalg.norm(r) / bnorm
        if (new_relres > tol and total < max_iter and j == m
                and relres - new_relres < 1e-14):
            raise StagnationDetected(
                "restart cycle reduced the residual by %.2e only" % (relres - new_relres))
        relres = new_relres


def masked_product_apply(F, B, W, lam, a_f):
    """Apply ``(B' kron F') diag(vec W) (B kron F) + lam I`` to ``a_f``.

    Evaluated without forming the Kronecker factors: with ``A_F`` the
    ``l x p`` reshape of ``a_f`` this is ``vec(F' (W * (F A_F B')) B) + lam a_f``.
    """
    F = np.asarray(F, dtype=float)
    B = np.asarray(B, dtype=float)
    Wd = _dense_of(W)
    ell, m = Wd.shape
    p = B.shape[1] if B.ndim == 2 else -1
    if F.shape != (ell, ell) or B.shape != (m, p) or np.shape(a_f) != (ell * p,):
        raise DimensionMismatch(
            "F %s, B %s, W %s, a_f %s are inconsistent"
            % (F.shape, B.shape, Wd.shape, np.shape(a_f)))
    A_F = unvec(a_f, (ell, p))
    M = Wd * ((F @ A_F) @ B.T)
    return vec(F.T @ (M @ B)) + lam * np.asarray(a_f, dtype=float)
