"""Tuning the Lasso / Group Lasso penalty by hyper-subgradient descent on the
leave-one-out error, using the fixed-point structure of proximal gradient descent."""

from .data import (
    Dataset,
    SufficientStats,
    SyntheticSpec,
    compute_stats,
    generate_group_sparse,
    generate_synthetic,
    label_energy,
    load_csv,
    loo_downdate,
    loo_update,
    save_csv,
    spectral_radius,
)
from .hyper import (
    HyperConfig,
    HyperTrajectory,
    batch_hypergradient,
    fd_hypergradient,
    hsgd_run,
    hsgd_step,
    lambda_max,
    ohsgd_run,
    val_gradient,
    z_tilde,
)
from .prox import GroupLasso, GroupStructure, Lasso, SubJacobian, penalty, prox, subderivatives
from .solver import PgdConfig, PgdResult, forward_step, objective, pgd_solve, subgradient_residual
from .validation import (
    LOO,
    ErrorCurve,
    HeldOut,
    KFold,
    default_grid,
    grid_search,
    make_folds,
    test_error,
    validation_error,
)

__version__ = "0.1.0"
