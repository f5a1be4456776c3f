"""Multi-task learning with low-rank output kernels.

Jointly learns ``m`` real-valued functions on a shared input space and a
low-rank PSD matrix ``L`` of task similarities by block coordinate descent
on the factorized objective.
"""

from .kernels import Item, KernelSpec, eval_kernel, gram_matrix
from .linalg import LinearOperator, Mask, cg_solve, cholesky_psd, gmres_solve
from .solver import (FactorPair, OklModel, Problem, SolverConfig, block_descent,
                     objective, predict, predict_many, recover_CL, reg_path)
from .data import Dataset, SynthConfig, load_movielens, load_triplets, split, synth_gp_generate
from .evaluation import masked_mae, masked_nmae, masked_rmse, mse_vs_truth, select_lambda
from .persist import load_model, save_model

__all__ = [
    'Item', 'KernelSpec', 'eval_kernel', 'gram_matrix',
    'LinearOperator', 'Mask', 'cg_solve', 'cholesky_psd', 'gmres_solve',
    'FactorPair', 'OklModel', 'Problem', 'SolverConfig', 'block_descent',
    'objective', 'predict', 'predict_many', 'recover_CL', 'reg_path',
    'Dataset', 'SynthConfig', 'load_movielens', 'load_triplets', 'split', 'synth_gp_generate',
    'masked_mae', 'masked_nmae', 'masked_rmse', 'mse_vs_truth', 'select_lambda',
    'load_model', 'save_model',
]

__version__ = '0.1.0'
