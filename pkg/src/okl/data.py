"""Datasets: triplet files, MovieLens, random splits and the synthetic GP generator."""

import math
import re
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .kernels import Item
from .linalg import Mask, as_mask, cholesky_auto

ML1M_GENRES = ("Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
               "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical",
               "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western")


class DataError(ValueError):
    pass


class ParseError(DataError):
    def __init__(self, msg, lineno=None, path=None):
        where = ""
        if path is not None:
            where += "%s:" % path
        if lineno is not None:
            where += "%d: " % lineno
        elif where:
            where += " "
        super().__init__(where + msg)
        self.lineno = lineno


class DuplicateEntry(ParseError):
    pass


class IndexOverflow(ParseError):
    pass


class EmptyDataset(DataError):
    pass


class UnknownMovieId(DataError):
    pass


class TaskTooSmall(UserWarning):
    pass


@dataclass
class Dataset:
    inputs: list
    Y: np.ndarray
    W: Mask
    task_names: Optional[list] = None
    ground_truth: Optional[np.ndarray] = None

    def __post_init__(self):
        self.W = as_mask(self.W)
        self.Y = np.where(self.W.dense, np.asarray(self.Y, dtype=float), 0.0)
        ell, m = self.W.shape
        if len(self.inputs) != ell:
            raise DataError("%d inputs for %d rows" % (len(self.inputs), ell))
        if not np.all(np.isfinite(self.Y)):
            raise DataError("observed values must be finite")
        if self.ground_truth is not None and np.shape(self.ground_truth) != (ell, m):
            raise DataError("ground truth has the wrong shape")

    @property
    def shape(self):
        return self.W.shape

    @property
    def n_observed(self):
        return self.W.count

    def masked(self, W):
        """Same inputs and truth, observations restricted to ``W``."""
        W = as_mask(W)
        return replace(self, W=W & self.W, Y=self.Y)


_SPLIT = re.compile(r"[,\t]")


def load_triplets(path, shape=None, inputs=None):
    """Read ``row,col,value`` records (comma- or tab-separated, 0-based).

    A single non-numeric header line is allowed. Dimensions are the maximal
    indices plus one unless ``shape`` is given. ``inputs`` defaults to the
    row indices as floats.
    """
    rows, cols, vals = [], [], []
    seen = set()
    with open(path, encoding='utf-8', newline=None) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in _SPLIT.split(line)]
            if len(parts) != 3:
                if lineno == 1 and not rows:
                    continue
                raise ParseError("expected 3 fields, got %d" % len(parts), lineno, path)
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                if lineno == 1 and not rows:
                    continue
                raise ParseError("cannot parse %r" % line, lineno, path) from None
            if i < 0 or j < 0:
                raise IndexOverflow("negative index", lineno, path)
            if shape is not None and (i >= shape[0] or j >= shape[1]):
                raise IndexOverflow("index (%d, %d) outside shape %s" % (i, j, tuple(shape)),
                                    lineno, path)
            if not math.isfinite(v):
                raise ParseError("non-finite value", lineno, path)
            if (i, j) in seen:
                raise DuplicateEntry("duplicate entry (%d, %d)" % (i, j), lineno, path)
            seen.add((i, j))
            rows.append(i)
            cols.append(j)
            vals.append(v)
    if not rows:
        raise EmptyDataset("no records in %s" % path)
    if shape is None:
        shape = (max(rows) + 1, max(cols) + 1)
    if inputs is not None and len(inputs) < shape[0]:
        raise IndexOverflow("row index %d but only %d inputs" % (max(rows), len(inputs)))
    if inputs is not None:
        shape = (len(inputs), shape[1])
    Y = np.zeros(shape)
    Y[rows, cols] = vals
    W = Mask(rows, cols, shape)
    if inputs is None:
        inputs = [float(i) for i in range(shape[0])]
    return Dataset(list(inputs), Y, W)


def save_triplets(dataset, path, sep=','):
    W = dataset.W
    order = np.lexsort((W.cols, W.rows))
    with open(path, 'w', encoding='utf-8') as fh:
        for k in order:
            i, j = W.rows[k], W.cols[k]
            fh.write("%d%s%d%s%s\n" % (i, sep, j, sep, repr(float(dataset.Y[i, j]))))


def format_input(x):
    if isinstance(x, Item):
        return "%d\t%s" % (x.id, "".join("1" if g else "0" for g in x.genres))
    return repr(float(x))


def parse_input(text):
    text = text.strip()
    if "\t" in text:
        ident, bits = text.split("\t")
        if bits and set(bits) - {"0", "1"}:
            raise ParseError("genre field must be a 0/1 string: %r" % bits)
        return Item(int(ident), tuple(int(b) for b in bits))
    return float(text)


def save_inputs(inputs, path):
    with open(path, 'w', encoding='utf-8') as fh:
        for x in inputs:
            fh.write(format_input(x) + "\n")


def load_inputs(path):
    out = []
    with open(path, encoding='utf-8', newline=None) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(parse_input(line))
            except ValueError as exc:
                raise ParseError(str(exc), lineno, path) from None
    if not out:
        raise EmptyDataset("no inputs in %s" % path)
    return out


def _read_lines(path, encoding='latin-1'):
    with open(path, encoding=encoding, newline=None) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.strip():
                yield lineno, line


def load_movielens_items(items_path, fmt='ml100k'):
    """Map movie id to its binary genre tuple."""
    items = {}
    for lineno, line in _read_lines(items_path):
        if fmt == 'ml100k':
            parts = line.split("|")
            if len(parts) < 20:
                raise ParseError("expected 24 '|' fields", lineno, items_path)
            flags = parts[-19:]
            if any(f not in ("0", "1") for f in flags):
                raise ParseError("genre flags must be 0/1", lineno, items_path)
            genres = tuple(int(f) for f in flags)
        elif fmt == 'ml1m':
            parts = line.split("::")
            if len(parts) != 3:
                raise ParseError("expected 'id::title::genres'", lineno, items_path)
            names = set(parts[2].split("|"))
            unknown = names - set(ML1M_GENRES)
            if unknown:
                raise ParseError("unknown genre %s" % sorted(unknown), lineno, items_path)
            genres = tuple(int(g in names) for g in ML1M_GENRES)
        else:
            raise ValueError("format must be 'ml100k' or 'ml1m'")
        try:
            items[int(parts[0])] = genres
        except ValueError:
            raise ParseError("bad movie id %r" % parts[0], lineno, items_path) from None
    if not items:
        raise EmptyDataset("no movies in %s" % items_path)
    return items


def load_movielens(ratings_path, items_path, fmt='ml100k', users=None):
    """Ratings as a multi-task dataset: inputs are movies, tasks are users.

    Every movie in the items file becomes an input (sorted by id); ``users``
    fixes the task order, which lets a base/test pair share task indices.
    """
    items = load_movielens_items(items_path, fmt)
    ids = sorted(items)
    row_of = {mid: r for r, mid in enumerate(ids)}
    triples = []
    for lineno, line in _read_lines(ratings_path):
        parts = line.split("\t") if fmt == 'ml100k' else line.split("::")
        if len(parts) < 3:
            raise ParseError("expected user, item, rating", lineno, ratings_path)
        try:
            user, movie, rating = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("cannot parse %r" % line, lineno, ratings_path) from None
        if movie not in row_of:
            raise UnknownMovieId("movie %d (line %d) missing from %s"
                                 % (movie, lineno, items_path))
        triples.append((user, movie, rating))
    if not triples:
        raise EmptyDataset("no ratings in %s" % ratings_path)
    if users is None:
        users = sorted({u for u, _, _ in triples})
    col_of = {u: c for c, u in enumerate(users)}
    Y = np.zeros((len(ids), len(users)))
    W = np.zeros(Y.shape, dtype=bool)
    for user, movie, rating in triples:
        if user not in col_of:
            raise DataError("user %d not in the given user list" % user)
        r, c = row_of[movie], col_of[user]
        if W[r, c]:
            raise DuplicateEntry("user %d rated movie %d twice" % (user, movie))
        Y[r, c] = rating
        W[r, c] = True
    inputs = [Item(mid, items[mid]) for mid in ids]
    return Dataset(inputs, Y, Mask.from_dense(W), task_names=list(users))


def split(dataset, fractions=(0.7, 0.3, 0.0), mode='per_task_random', seed=0):
    """Partition the observed entries into train, validation and test masks.

    ``per_task_random`` shuffles each task's observations separately; a task
    with fewer than 3 observations goes entirely to train (with a warning).
    Returns three datasets sharing inputs.
    """
    fr = np.asarray(fractions, dtype=float)
    if fr.shape != (3,) or np.any(fr < 0) or not np.isclose(fr.sum(), 1.0):
        raise ValueError("fractions must be three nonnegative numbers summing to 1")
    if mode not in ('per_task_random', 'global_random'):
        raise ValueError("unknown split mode %r" % mode)
    rng = np.random.default_rng(seed)
    W = dataset.W
    label = np.zeros(W.count, dtype=int)
    cut = np.cumsum(fr)[:2]

    def assign(idx):
        n = idx.size
        perm = rng.permutation(idx)
        a, b = np.rint(cut * n).astype(int)
        label[perm[a:b]] = 1
        label[perm[b:]] = 2

    if mode == 'global_random':
        assign(np.arange(W.count))
    else:
        small = []
        for j in range(W.shape[1]):
            idx = np.flatnonzero(W.cols == j)
            if idx.size == 0:
                continue
            if idx.size < 3 and fr[0] < 1.0:
                small.append(j)
                continue
            assign(idx)
        if small:
            warnings.warn("%d tasks with fewer than 3 observations kept in train" % len(small),
                          TaskTooSmall, stacklevel=2)
    out = []
    for k in range(3):
        sel = label == k
        out.append(replace(dataset, W=Mask(W.rows[sel], W.cols[sel], W.shape), Y=dataset.Y))
    return tuple(out)


@dataclass
class SynthConfig:
    n_latent: int = 50
    m: int = 200
    grid_size: int = 200
    n_sampled: int = 100
    n_train: int = 70
    decay: float = 10.0
    snr: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ('n_latent', 'm', 'grid_size', 'n_sampled', 'n_train'):
            if getattr(self, name) < 1:
                raise ValueError("%s must be positive" % name)
        if self.n_sampled > self.grid_size:
            raise ValueError("n_sampled cannot exceed grid_size")
        if self.n_train > self.n_sampled:
            raise ValueError("n_train cannot exceed n_sampled")
        if not self.decay > 0 or not self.snr > 0:
            raise ValueError("decay and snr must be positive")


def synth_gp_generate(config=None):
    """Noisy samples of random mixtures of latent Gaussian processes.

    ``n_latent`` zero-mean processes with covariance ``exp(-decay |x1-x2|)``
    are drawn on a uniform grid over [-1, 1] and mixed with weights uniform
    on [0, 1] into ``m`` tasks. Each task observes ``n_sampled`` grid points
    drawn without replacement, with Gaussian noise whose standard deviation
    is the task's noiseless sample standard deviation divided by ``snr``
    (``snr=inf`` disables noise). ``n_train`` of each task's points are used
    for training; the rest form the validation mask.

    Returns
    -------
    dataset : Dataset
        All sampled observations, with ``ground_truth`` on the whole grid.
    valid_mask : Mask
        Held-out validation entries (a subset of ``dataset.W``).
    """
    cfg = config or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    grid = np.linspace(-1.0, 1.0, cfg.grid_size)
    cov = np.exp(-cfg.decay * np.abs(grid[:, None] - grid[None, :]))
    L, _ = cholesky_auto(cov)
    Z = L @ rng.standard_normal((cfg.grid_size, cfg.n_latent))
    mix = rng.uniform(0.0, 1.0, size=(cfg.m, cfg.n_latent))
    truth = Z @ mix.T

    W = np.zeros(truth.shape, dtype=bool)
    V = np.zeros(truth.shape, dtype=bool)
    Y = np.zeros(truth.shape)
    for j in range(cfg.m):
        pts = rng.choice(cfg.grid_size, size=cfg.n_sampled, replace=False)
        W[pts, j] = True
        V[pts[cfg.n_train:], j] = True
        signal = truth[pts, j]
        sd = 0.0 if np.isinf(cfg.snr) else signal.std() / cfg.snr
        Y[pts, j] = signal + sd * rng.standard_normal(pts.size)
    ds = Dataset([float(x) for x in grid], Y, Mask.from_dense(W), ground_truth=truth)
    return ds, Mask.from_dense(V)


def synth_split(config=None):
    """Train and validation datasets from :func:`synth_gp_generate`."""
    ds, valid = synth_gp_generate(config)
    train = ds.masked(~valid.dense)
    return train, ds.masked(valid)
