"""Masked error metrics and validation-based choice of the regularization parameter."""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import as_mask


class EmptyMask(ValueError):
    pass


class MissingGroundTruth(ValueError):
    pass


class EmptyPath(ValueError):
    pass


def _residuals(pred, Y, W):
    W = as_mask(W)
    if W.count == 0:
        raise EmptyMask("no observed entries to evaluate on")
    pred = np.asarray(pred, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if pred.shape != W.shape or Y.shape != W.shape:
        raise ValueError("pred %s, Y %s and W %s differ in shape" % (pred.shape, Y.shape, W.shape))
    return pred[W.rows, W.cols] - Y[W.rows, W.cols]


def masked_rmse(pred, Y, W):
    r = _residuals(pred, Y, W)
    return float(np.sqrt(np.mean(r * r)))


def masked_mae(pred, Y, W):
    return float(np.mean(np.abs(_residuals(pred, Y, W))))


def masked_nmae(pred, Y, W, r_min=1.0, r_max=5.0):
    if not r_max > r_min:
        raise ValueError("r_max must exceed r_min")
    return masked_mae(pred, Y, W) / (r_max - r_min)


def masked_mse(pred, Y, W):
    r = _residuals(pred, Y, W)
    return float(np.mean(r * r))


def mse_vs_truth(pred, ground_truth, eval_mask=None):
    """Mean squared difference to the noiseless signal on ``eval_mask``
    (every entry when omitted)."""
    if ground_truth is None:
        raise MissingGroundTruth("dataset carries no ground truth")
    truth = np.asarray(ground_truth, dtype=float)
    if eval_mask is None:
        eval_mask = np.ones(truth.shape, dtype=bool)
    return masked_mse(pred, truth, eval_mask)


METRICS = {
    'rmse': masked_rmse,
    'mae': masked_mae,
    'nmae': masked_nmae,
    'mse': masked_mse,
}


@dataclass
class MetricReport:
    rmse: float
    mae: float
    nmae: float
    mse_truth: Optional[float] = None
    lam: Optional[float] = None


def metric_report(pred, dataset, r_min=1.0, r_max=5.0, lam=None, clip=False, truth_mask=None):
    if clip:
        pred = np.clip(pred, r_min, r_max)
    truth = None
    if dataset.ground_truth is not None:
        truth = mse_vs_truth(pred, dataset.ground_truth, truth_mask)
    return MetricReport(
        rmse=masked_rmse(pred, dataset.Y, dataset.W),
        mae=masked_mae(pred, dataset.Y, dataset.W),
        nmae=masked_nmae(pred, dataset.Y, dataset.W, r_min, r_max),
        mse_truth=truth, lam=lam)


def _model_of(entry):
    if hasattr(entry, 'model'):
        return entry.lam, entry.model
    lam, model = entry[0], entry[1]
    return lam, model


def select_lambda(path, validation, metric='rmse', clip=None):
    """Return ``(lam, model, score)`` minimizing ``metric`` on ``validation``.

    ``path`` holds ``(lam, model, ...)`` entries; ties go to the larger
    ``lam``. ``clip`` is an optional ``(r_min, r_max)`` range applied to
    predictions before scoring.
    """
    entries = [_model_of(e) for e in path]
    if not entries:
        raise EmptyPath("cannot select from an empty path")
    fn = METRICS[metric] if isinstance(metric, str) else metric
    best = None
    for lam, model in entries:
        pred = model.predict_many(validation.inputs)
        if clip is not None:
            pred = np.clip(pred, *clip)
        score = fn(pred, validation.Y, validation.W)
        key = (score, -lam)
        if best is None or key < best[0]:
            best = (key, lam, model, score)
    return best[1], best[2], best[3]


def select_from_table(lams, scores):
    """Argmin over a precomputed metric table; ties go to the larger lambda."""
    lams = np.asarray(lams, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if lams.size == 0:
        raise EmptyPath("empty table")
    order = np.lexsort((-lams, scores))
    return float(lams[order[0]]), float(scores[order[0]])


def write_metrics_csv(reports, path):
    with_truth = any(r.mse_truth is not None for r in reports)
    header = ['lambda', 'rmse', 'mae', 'nmae'] + (['mse_truth'] if with_truth else [])
    with open(path, 'w', newline='', encoding='utf-8') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(header)
        for r in reports:
            row = [r.lam, r.rmse, r.mae, r.nmae]
            if with_truth:
                row.append('' if r.mse_truth is None else r.mse_truth)
            w.writerow(['%.10g' % v if isinstance(v, float) else v for v in row])
