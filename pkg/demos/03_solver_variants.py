# coding: utf-8

# # Three ways to solve for A
#
# With B fixed, the optimal A solves a linear system in l*p unknowns that
# is never formed explicitly. The package offers:
#
# * cholesky: CG on the symmetric system for A_F = F'A, with K = F F';
# * gmres: restarted GMRES on the original, non-symmetric system;
# * cvar: CG on the coefficients C, which live only on observed entries.

import time

import numpy as np

from okl import data
from okl.kernels import KernelSpec
from okl.solver import Problem, SolverConfig, solve_A_cholesky, solve_A_cvar, solve_A_gmres

train, _ = data.synth_split(data.SynthConfig(n_latent=10, m=40, grid_size=100, seed=2))
problem = Problem.from_inputs(KernelSpec('exp_covariance'), train.inputs, train.Y, train.W,
                              p=10, lam=1.0)
B = np.random.default_rng(0).uniform(size=(40, 10))


# All three should agree on K A (A itself is only identified up to the null
# space of K).

cfg = SolverConfig(tol=1e-10)
results = {}
for name, step in (('cholesky', solve_A_cholesky), ('gmres', solve_A_gmres),
                   ('cvar', solve_A_cvar)):
    t0 = time.perf_counter()
    A, iters, relres = step(problem, B, None, cfg)
    results[name] = problem.K @ A
    print("%-9s %5d iterations  relres %.1e  %.3fs"
          % (name, iters, relres, time.perf_counter() - t0))

ref = results['cholesky']
for name in ('gmres', 'cvar'):
    gap = np.linalg.norm(results[name] - ref) / np.linalg.norm(ref)
    print("relative gap %s vs cholesky: %.1e" % (name, gap))


# Along a regularization path the previous answer is the starting point.
# At the same lambda it is already the solution; at a nearby lambda it
# saves only part of the work, since the tolerance is relative.

A, cold, _ = solve_A_cholesky(problem, B, None, cfg)
_, same, _ = solve_A_cholesky(problem, B, A, cfg)
_, near, _ = solve_A_cholesky(problem.with_lambda(0.9), B, A, cfg)
print("cold start: %d iterations; warm, same lambda: %d; warm, lambda 0.9: %d"
      % (cold, same, near))
