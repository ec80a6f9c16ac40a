"""
Tuning a Lasso penalty by hyper-subgradient descent
===================================================

A small sparse regression problem; the penalty weight is tuned by descending
the leave-one-out error instead of sweeping a grid.
"""

import numpy as np

from hypergrad import HyperConfig, LOO, Lasso, PgdConfig, SyntheticSpec, generate_synthetic, hsgd_run
from hypergrad.hyper import lambda_max

###############################################################################
# Draw 60 training samples in 20 dimensions with 4 active weights.

train, test, w_true = generate_synthetic(SyntheticSpec(dim=20, sparsity=4, n_train=60, n_test=500, snr=2.0, seed=1))
lmax = lambda_max(train, Lasso())
print(f"lambda_max = {lmax:.4f}")

###############################################################################
# Run batch descent from 0.1 * lambda_max.  With leave-one-out validation the
# effective step is ``beta * N`` times the mean per-sample hypergradient.

cfg = HyperConfig(beta=2e-3, max_outer=100, outer_tol=1e-5, inner=PgdConfig(tol=1e-6))
traj = hsgd_run(train, Lasso(), LOO(), cfg)
for rec in traj.records[:: max(1, len(traj) // 8)]:
    print(f"k={rec.k:3d}  lambda={rec.lambda_:.5f}  loo={rec.val_error:.4f}  hypergrad={rec.hypergrad:+.2e}")
print(f"stopped after {len(traj)} steps at lambda = {traj.final_lambda:.5f}")
