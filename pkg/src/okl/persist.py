"""Plain-text model directories.

Layout of a model directory::

    A.txt        l x p factor, one row per line, space separated, %.17e
    B.txt        m x p factor, same format
    inputs.txt   training inputs, one per line (a float, or "id<TAB>0101..."
                 for items with genre flags)
    tasks.txt    optional, one task name per line
    meta.txt     key=value lines: format, kind, lambda, p, jitter, kernel,
                 decay, seed, n_inputs, n_tasks
"""

import os

import numpy as np

from . import kernels
from .data import load_inputs, save_inputs
from .solver import FactorPair, OklModel

FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _write_matrix(M, path):
    np.savetxt(path, np.atleast_2d(M), fmt='%.17e', delimiter=' ')


def _read_matrix(path, shape):
    try:
        M = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ModelFormatError("cannot read %s: %s" % (path, exc)) from None
    if M.shape != shape:
        raise ModelFormatError("%s has shape %s, expected %s" % (path, M.shape, shape))
    return M


def save_model(model, directory):
    os.makedirs(directory, exist_ok=True)
    _write_matrix(model.factors.A, os.path.join(directory, 'A.txt'))
    _write_matrix(model.factors.B, os.path.join(directory, 'B.txt'))
    save_inputs(model.train_inputs, os.path.join(directory, 'inputs.txt'))
    tasks_path = os.path.join(directory, 'tasks.txt')
    if model.task_names is not None:
        with open(tasks_path, 'w', encoding='utf-8') as fh:
            fh.writelines("%s\n" % t for t in model.task_names)
    elif os.path.exists(tasks_path):
        os.remove(tasks_path)
    meta = {
        'format': FORMAT_VERSION,
        'kind': model.kind,
        'lambda': repr(float(model.lam)),
        'p': model.p,
        'jitter': repr(float(model.jitter)),
        'kernel': model.spec.variant,
        'decay': repr(float(model.spec.decay)),
        'seed': '' if model.seed is None else model.seed,
        'n_inputs': len(model.train_inputs),
        'n_tasks': model.n_tasks,
    }
    with open(os.path.join(directory, 'meta.txt'), 'w', encoding='utf-8') as fh:
        for k, v in meta.items():
            fh.write("%s=%s\n" % (k, v))


def read_meta(directory):
    path = os.path.join(directory, 'meta.txt')
    if not os.path.isfile(path):
        raise ModelFormatError("missing %s" % path)
    meta = {}
    with open(path, encoding='utf-8') as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise ModelFormatError("bad metadata line %r" % line)
            k, v = line.split('=', 1)
            meta[k.strip()] = v.strip()
    return meta


def load_model(directory):
    meta = read_meta(directory)
    try:
        ell, m, p = int(meta['n_inputs']), int(meta['n_tasks']), int(meta['p'])
        lam, jitter = float(meta['lambda']), float(meta['jitter'])
        spec = kernels.KernelSpec(meta['kernel'], decay=float(meta.get('decay', 10.0)))
        seed = int(meta['seed']) if meta.get('seed') else None
        kind = meta.get('kind', 'okl')
    except (KeyError, ValueError) as exc:
        raise ModelFormatError("bad metadata in %s: %s" % (directory, exc)) from None
    A = _read_matrix(os.path.join(directory, 'A.txt'), (ell, p))
    B = _read_matrix(os.path.join(directory, 'B.txt'), (m, p))
    try:
        inputs = load_inputs(os.path.join(directory, 'inputs.txt'))
    except (OSError, ValueError) as exc:
        raise ModelFormatError("cannot read training inputs: %s" % exc) from None
    if len(inputs) != ell:
        raise ModelFormatError("%d training inputs, metadata says %d" % (len(inputs), ell))
    tasks = None
    tasks_path = os.path.join(directory, 'tasks.txt')
    if os.path.isfile(tasks_path):
        with open(tasks_path, encoding='utf-8') as fh:
            tasks = [_task_name(t.strip()) for t in fh if t.strip()]
    try:
        return OklModel(FactorPair(A, B), lam, spec, inputs, jitter, kind=kind, seed=seed,
                        task_names=tasks)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None


def _task_name(text):
    try:
        return int(text)
    except ValueError:
        return text
