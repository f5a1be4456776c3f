# coding: utf-8

# # Choosing the rank of the output kernel
#
# Forty tasks are random mixtures of ten latent Gaussian processes, observed
# with noise at a few points each. We fit a whole regularization path for
# several rank bounds p and look at how well the validation-selected model
# reconstructs the noiseless signals.

import numpy as np

from okl import data
from okl.experiments import rank_scan
from okl.kernels import KernelSpec
from okl.solver import default_grid

cfg = data.SynthConfig(n_latent=10, m=40, grid_size=100, seed=0)
train, valid = data.synth_split(cfg)
print("inputs x tasks:", train.shape)
print("training / validation observations:", train.n_observed, valid.n_observed)


# The input kernel is the covariance that generated the latent processes.
# The default grid has 30 values, log-spaced over five decades below
# ||Y||_F^2 / l.

spec = KernelSpec('exp_covariance', decay=cfg.decay)
grid = default_grid(train.Y)
print("lambda from %.3g down to %.3g" % (grid[0], grid[-1]))


# One warm-started path per rank bound. Each row keeps the lambda with the
# lowest validation MSE and the MSE of that model against the true signals
# on the whole grid.

rows = rank_scan(train, valid, spec, [1, 2, 4, 6, 10, 20, 40], grid)
print("\n  p    lambda    valid MSE   truth MSE   seconds")
for r in rows:
    print("%3d  %9.4g  %10.4f  %10.4f  %7.2f"
          % (r.p, r.lam, r.validation_mse, r.mse_truth, r.fit_seconds))


# A rank cap between the extremes usually wins: p=1 cannot express forty
# different mixtures, while p=m leaves all the shrinkage to the trace
# penalty.

best = min(rows, key=lambda r: r.mse_truth)
print("\nbest rank bound: p=%d" % best.p)


# The learned output kernel L = B B' shows how the tasks relate. Its
# numerical rank at the selected lambda is often well below the cap.

from okl.experiments import fit_path
from okl.evaluation import masked_mse, select_lambda
from okl.solver import recover_CL

path = fit_path('okl', train, spec, grid, p=best.p)
lam, model, _ = select_lambda(path, valid, metric=masked_mse)
C, L = recover_CL(model)
eig = np.linalg.eigvalsh(L)[::-1]
print("top eigenvalues of L:", np.round(eig[:best.p], 3))
