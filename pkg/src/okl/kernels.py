"""Scalar input kernels and Gram-matrix assembly.

Two kinds of input points are supported: real scalars (time or position)
and :class:`Item` records carrying an integer id and a binary genre vector.
"""

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

VARIANTS = ('kronecker_delta', 'linear_spline', 'pkpd_composite',
            'exp_covariance', 'id_plus_genre')


class KernelError(ValueError):
    pass


class IncompatibleInput(KernelError):
    pass


class NegativeTime(KernelError):
    pass


class Item(NamedTuple):
    id: int
    genres: tuple


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    decay: float = 10.0
    metadata: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise KernelError("unknown kernel variant %r" % self.variant)
        if self.variant == 'exp_covariance' and not self.decay > 0:
            raise KernelError("exp_covariance needs a positive decay")
        if self.metadata is not None:
            lengths = {len(g) for g in self.metadata.values()}
            if len(lengths) > 1:
                raise KernelError("genre vectors have different lengths: %s" % sorted(lengths))

    def params(self):
        if self.variant == 'exp_covariance':
            return {'decay': self.decay}
        return {}

    def resolve(self, x):
        """Attach metadata to bare ids for the id_plus_genre variant."""
        if self.variant != 'id_plus_genre' or isinstance(x, Item):
            return x
        if self.metadata is None or int(x) not in self.metadata:
            raise IncompatibleInput("no genre metadata for item %r" % (x,))
        return Item(int(x), tuple(self.metadata[int(x)]))


def _scalar(x):
    if isinstance(x, Item) or np.ndim(x) != 0:
        raise IncompatibleInput("expected a real scalar input, got %r" % (x,))
    return float(x)


def _time(x):
    t = _scalar(x)
    if t < 0:
        raise NegativeTime("spline kernels are defined for t >= 0, got %g" % t)
    return t


def _item(spec, x):
    x = spec.resolve(x)
    if not isinstance(x, Item):
        raise IncompatibleInput("expected an Item input, got %r" % (x,))
    return x


def cubic_spline(x1, x2):
    """Cubic spline term ``x1 x2 min/2 - min^3/3`` (vectorized).

    With the ``1/3`` coefficient this is not positive semidefinite in
    general (the textbook spline kernel uses ``1/6``), so Gram matrices of
    ``pkpd_composite`` over several time points may be indefinite and then
    fail the Cholesky factorization of the solver.
    """
    lo = np.minimum(x1, x2)
    return x1 * x2 * lo / 2.0 - lo ** 3 / 3.0


def _decay_map(t):
    return 1.0 / (1.0 + t)


def _hamming(g1, g2):
    g1 = np.asarray(g1, dtype=bool)
    g2 = np.asarray(g2, dtype=bool)
    if g1.shape != g2.shape:
        raise IncompatibleInput("genre vectors differ in length")
    return np.count_nonzero(g1 != g2) / g1.size


def eval_kernel(spec, x1, x2):
    v = spec.variant
    if v == 'kronecker_delta':
        if isinstance(x1, Item) or isinstance(x2, Item):
            a, b = _item(spec, x1), _item(spec, x2)
            return 1.0 if a.id == b.id else 0.0
        return 1.0 if _scalar(x1) == _scalar(x2) else 0.0
    if v == 'linear_spline':
        return 1.0 + min(_time(x1), _time(x2))
    if v == 'pkpd_composite':
        t1, t2 = _time(x1), _time(x2)
        return t1 * t2 * float(cubic_spline(_decay_map(t1), _decay_map(t2)))
    if v == 'exp_covariance':
        return float(np.exp(-spec.decay * abs(_scalar(x1) - _scalar(x2))))
    # id_plus_genre
    a, b = _item(spec, x1), _item(spec, x2)
    return (1.0 if a.id == b.id else 0.0) + float(np.exp(-_hamming(a.genres, b.genres)))


def cross_gram(spec, xs, zs):
    """Matrix of kernel values ``K[i, j] = k(xs[i], zs[j])``."""
    xs, zs = list(xs), list(zs)
    if not xs or not zs:
        raise KernelError("empty input list")
    v = spec.variant
    if v == 'id_plus_genre' or (v == 'kronecker_delta' and isinstance(spec.resolve(xs[0]), Item)):
        a = [_item(spec, x) for x in xs]
        b = [_item(spec, z) for z in zs]
        ia = np.array([x.id for x in a])
        ib = np.array([z.id for z in b])
        K = (ia[:, None] == ib[None, :]).astype(float)
        if v == 'id_plus_genre':
            ga = np.array([x.genres for x in a], dtype=float)
            gb = np.array([z.genres for z in b], dtype=float)
            if ga.shape[1] != gb.shape[1]:
                raise IncompatibleInput("genre vectors differ in length")
            # Hamming distance between binary rows through inner products
            diff = ga @ (1 - gb).T + (1 - ga) @ gb.T
            K += np.exp(-diff / ga.shape[1])
        return K

    conv = _time if v in ('linear_spline', 'pkpd_composite') else _scalar
    s = np.array([conv(x) for x in xs])
    t = np.array([conv(z) for z in zs])
    S, T = s[:, None], t[None, :]
    if v == 'kronecker_delta':
        return (S == T).astype(float)
    if v == 'linear_spline':
        return 1.0 + np.minimum(S, T)
    if v == 'pkpd_composite':
        return S * T * cubic_spline(_decay_map(S), _decay_map(T))
    return np.exp(-spec.decay * np.abs(S - T))


def gram_matrix(spec, inputs):
    K = cross_gram(spec, inputs, inputs)
    return 0.5 * (K + K.T)
