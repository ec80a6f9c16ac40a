"""
Group Lasso on block-sparse weights
===================================

Weights are nonzero on one block of five coordinates.  After tuning, the
groups kept by the full-data fit are compared with the true block.
"""

import numpy as np

from hypergrad import GroupLasso, GroupStructure, HyperConfig, LOO, PgdConfig, SyntheticSpec, hsgd_run
from hypergrad.data import compute_stats, generate_group_sparse
from hypergrad.solver import pgd_solve

spec = SyntheticSpec(dim=30, n_train=90, n_test=2, snr=4.0, seed=3)
train, _, w_true = generate_group_sparse(spec, group_size=5, n_active_groups=1)
reg = GroupLasso(GroupStructure.uniform(30, 5))

traj = hsgd_run(train, reg, LOO(), HyperConfig(beta=1e-3, max_outer=150, outer_tol=1e-5))
lam = traj.final_lambda

stats = compute_stats(train)
w = pgd_solve(stats, reg, lam, PgdConfig(tol=1e-8).with_step(stats)).w
print(f"lambda* = {lam:.5f}")
print("true group norms  ", np.round(reg.groups.norms(w_true), 3))
print("fitted group norms", np.round(reg.groups.norms(w), 3))
