"""
Comparing against the grid-search baseline
==========================================

Evaluate the leave-one-out curve on a log grid, then check where descent lands.
"""

import numpy as np

from hypergrad import HyperConfig, LOO, Lasso, PgdConfig, SyntheticSpec, generate_synthetic, hsgd_run
from hypergrad.hyper import lambda_max
from hypergrad.validation import default_grid, grid_search, make_folds

train, test, _ = generate_synthetic(SyntheticSpec(dim=30, sparsity=5, n_train=80, n_test=1000, snr=1.0, seed=4))

# Folds are built once and shared by both methods.
folds = make_folds(LOO(), train)
grid = default_grid(lambda_max(train, Lasso()), n=25)
curve = grid_search(train, Lasso(), None, grid, PgdConfig(tol=1e-6), test_set=test, folds=folds)

for lam, loo, te in zip(curve.lambdas, curve.val_errors, curve.test_errors):
    bar = "#" * int(40 * loo / curve.val_errors.max())
    print(f"{lam:9.5f}  loo={loo:.4f}  test={te:.4f}  {bar}")

###############################################################################
# The curve is nearly flat around its minimum, so the hypergradient there is
# small and descent settles wherever the LOO error stops changing much.  A
# larger beta does not help: the hypergradient is large at small lambda and
# overshoots past lambda_max, where it vanishes.

traj = hsgd_run(train, Lasso(), folds, HyperConfig(beta=1e-3, max_outer=200, outer_tol=1e-5))
last = traj.records[-1]
print(f"grid argmin {curve.argmin:.5f} (loo {curve.val_errors.min():.4f})")
print(f"descent     {traj.final_lambda:.5f} (loo {last.val_error:.4f} at lambda {last.lambda_eval:.5f})")
print(f"inner iterations: grid {curve.inner_iters}, descent {traj.records[-1].cum_inner_iters}")
