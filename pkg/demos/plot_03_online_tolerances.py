"""
Online updates with inexact inner solves
========================================

The online variant updates lambda after every single held-out sample.  Each
inner problem is warm-started, so even a coarse inner tolerance tracks the
minimizer while spending far fewer proximal iterations.
"""

from hypergrad import HyperConfig, LOO, Lasso, PgdConfig, SyntheticSpec, generate_synthetic, ohsgd_run
from hypergrad.validation import make_folds

train, _, _ = generate_synthetic(SyntheticSpec(dim=40, sparsity=6, n_train=80, n_test=2, snr=0.5, seed=2))
folds = make_folds(LOO(), train)

for tol in (1e-1, 1e-3, 1e-6):
    cfg = HyperConfig(beta=2e-3, max_outer=60 * len(folds), outer_tol=1e-5, inner=PgdConfig(tol=tol))
    traj = ohsgd_run(train, Lasso(), folds, cfg)
    print(
        f"inner tol {tol:7.0e}:  lambda* = {traj.final_lambda:.5f}  "
        f"updates = {len(traj):5d}  inner iterations = {traj.records[-1].cum_inner_iters}"
    )
