"""Method-agnostic path fitting and the rank scan used for model selection studies."""

import time
from dataclasses import dataclass

import numpy as np

from . import baselines, kernels
from .evaluation import masked_mse, mse_vs_truth, select_lambda
from .solver import PathPoint, Problem, SolverConfig, default_grid, reg_path

METHODS = ('okl', 'independent', 'pooled', 'rmf')


def fit_path(method, train, spec, grid=None, p=None, config=None):
    """Fit ``method`` on every lambda of a decreasing grid.

    OKL and RMF use the warm-started path driver; the single-task baselines
    are refitted directly at each lambda.
    """
    if method not in METHODS:
        raise ValueError("unknown method %r" % method)
    config = config or SolverConfig()
    grid = default_grid(train.Y) if grid is None else np.asarray(grid, dtype=float)
    m = train.shape[1]
    p = m if p is None else int(p)
    if method in ('okl', 'rmf'):
        if method == 'rmf':
            spec = kernels.KernelSpec('kronecker_delta')
            problem = Problem.from_kernel(np.eye(train.shape[0]), train.Y, train.W, p,
                                          grid[0], jitter=0.0, spec=spec,
                                          inputs=list(train.inputs))
        else:
            problem = Problem.from_inputs(spec, train.inputs, train.Y, train.W, p, grid[0])
        path = reg_path(problem, grid, config)
        for pt in path:
            pt.model.kind = method
    else:
        K = kernels.gram_matrix(spec, train.inputs)
        fit = baselines.independent_model if method == 'independent' else baselines.pooled_model
        path = [PathPoint(float(lam), fit(spec, train.inputs, train.Y, train.W, lam, K=K), None)
                for lam in grid]
    if train.task_names is not None:
        for pt in path:
            pt.model.task_names = list(train.task_names)
    return path


@dataclass
class ScanRow:
    p: int
    lam: float
    validation_mse: float
    mse_truth: float
    fit_seconds: float


def rank_scan(train, valid, spec, p_list, grid=None, config=None):
    """One validation-tuned OKL path per rank bound.

    ``train`` must carry ground truth; the reconstruction error is measured
    on every grid entry. Duplicate ranks are fitted once.
    """
    grid = default_grid(train.Y) if grid is None else grid
    rows = []
    for p in sorted(set(int(q) for q in p_list)):
        t0 = time.perf_counter()
        path = fit_path('okl', train, spec, grid, p, config)
        seconds = time.perf_counter() - t0
        lam, model, score = select_lambda(path, valid, metric=masked_mse)
        pred = model.predict_many(train.inputs)
        rows.append(ScanRow(p, lam, score, mse_vs_truth(pred, train.ground_truth), seconds))
    return rows


def selected_truth_mse(method, train, valid, spec, grid=None, p=None, config=None):
    """Reconstruction MSE of the validation-selected model of ``method``."""
    path = fit_path(method, train, spec, grid, p, config)
    lam, model, _ = select_lambda(path, valid, metric=masked_mse)
    return mse_vs_truth(model.predict_many(train.inputs), train.ground_truth), lam
