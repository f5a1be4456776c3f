# coding: utf-8

# # Movie ratings
#
# Each user is a task and each movie an input. The input kernel adds a
# movie identity term to a genre similarity, exp(-normalized Hamming
# distance), so unseen movies still get sensible predictions.
#
# Needs the MovieLens 100K files u.item, ua.base and ua.test. Pass their
# directory as the first argument or set OKL_MOVIELENS_DIR. A full run over
# 30 lambdas takes a while.

import os
import sys

import numpy as np

from okl import data
from okl.evaluation import masked_nmae, masked_rmse, select_lambda
from okl.experiments import fit_path
from okl.kernels import KernelSpec
from okl.solver import default_grid

root = sys.argv[1] if len(sys.argv) > 1 else os.environ.get('OKL_MOVIELENS_DIR')
if not root or not os.path.isfile(os.path.join(root, 'ua.base')):
    sys.exit("MovieLens 100K not found; pass its directory or set OKL_MOVIELENS_DIR")

items = os.path.join(root, 'u.item')
base = data.load_movielens(os.path.join(root, 'ua.base'), items)
test = data.load_movielens(os.path.join(root, 'ua.test'), items, users=base.task_names)
print("movies x users:", base.shape, " ratings:", base.n_observed, "/", test.n_observed)


# A quarter of each user's training ratings is held out to pick lambda.

train, valid, _ = data.split(base, (0.75, 0.25, 0.0), seed=0)
grid = default_grid(train.Y)


# The output kernel has rank at most 5. Predictions are clipped to the
# rating range before scoring.

path = fit_path('okl', train, KernelSpec('id_plus_genre'), grid, p=5)
lam, model, _ = select_lambda(path, valid, metric='rmse', clip=(1, 5))
pred = np.clip(model.predict_many(test.inputs), 1, 5)
print("lambda=%.4g  test RMSE=%.4f  NMAE=%.4f"
      % (lam, masked_rmse(pred, test.Y, test.W), masked_nmae(pred, test.Y, test.W)))
