# coding: utf-8

# # OKL against its special cases
#
# Fixing the output kernel gives two single-task methods: L = I fits every
# task on its own, L = e e' pools all tasks into one function. Fixing the
# input kernel to the identity gives regularized matrix factorization (RMF),
# which cannot say anything about inputs it has not seen.

from okl import data
from okl.evaluation import masked_mse, mse_vs_truth, select_lambda
from okl.experiments import fit_path
from okl.kernels import KernelSpec
from okl.solver import default_grid

train, valid = data.synth_split(data.SynthConfig(n_latent=10, m=40, grid_size=100, seed=1))
spec = KernelSpec('exp_covariance', decay=10.0)
grid = default_grid(train.Y)


# Each method is fitted on the same grid and tuned on the same validation
# entries. The score is the error against the noiseless signal on every
# grid point, observed or not.

for method, p in (('independent', None), ('pooled', None), ('rmf', 10), ('okl', 10)):
    path = fit_path(method, train, spec, grid, p=p)
    lam, model, _ = select_lambda(path, valid, metric=masked_mse)
    err = mse_vs_truth(model.predict_many(train.inputs), train.ground_truth)
    print("%-12s lambda=%-9.3g truth MSE=%.4f" % (method, lam, err))


# RMF only predicts well where a task or a related task was observed; the
# independent fit ignores the other 39 tasks; pooling ignores that tasks
# differ. OKL borrows strength across tasks through L while the input kernel
# fills the gaps between sampled points.
