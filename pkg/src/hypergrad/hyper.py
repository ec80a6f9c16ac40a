"""Hyper-subgradient descent on the validation error over the penalty weight.

At a PGD fixed point ``w* = prox(F(w*), alpha*lam)`` the sensitivity
``z = dw*/dlam`` solves the linear system::

    (I - A (I - alpha phi_j)) z = b

where ``A`` (diagonal) and ``b`` are sub-Jacobians of the prox at
``w_f* = F(w*)``.  Each validation sample ``j`` then contributes
``z_j^T x_j (x_j^T w_j* - y_j)`` to the hyper-subgradient.

Conventions
-----------
``x_j (x_j^T w - y_j)`` is half the gradient of the squared error, so the
*batch hypergradient* returned here, the mean of the per-sample
contributions over the validation set, is half the derivative of the mean
squared validation error: ``2 * batch_hypergradient ~= fd_hypergradient``.

For a scheme with ``F`` folds the stochastic hypergradient of fold ``f`` is
``(F / |V|) * sum_{j in f} z_f^T x_j (x_j^T w_f - y_j)``, so the mean over
folds is exactly the batch hypergradient.  An HSGD step moves lambda by
``beta * F * batch``, i.e. the plain sum over folds; with LOO one HSGD step and
one OHSGD sweep take steps of the same scale.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .data import Dataset, SufficientStats, compute_stats
from .prox import Regularizer, SubJacobian
from .solver import PgdConfig, PgdResult, pgd_solve
from .validation import FoldSet, ValidationScheme, make_folds, solve_folds, validation_error

logger = logging.getLogger(__name__)

__all__ = [
    "HyperConfig",
    "TrajectoryRecord",
    "HyperTrajectory",
    "SingularSystemError",
    "z_tilde",
    "val_gradient",
    "fold_hypergradient",
    "batch_hypergradient",
    "hsgd_step",
    "hsgd_run",
    "ohsgd_run",
    "fd_hypergradient",
    "lambda_max",
]

Z_MODES = ("linear_solve", "least_squares", "iterative")


class SingularSystemError(np.linalg.LinAlgError):
    """The sensitivity system is singular; use the least-squares mode instead."""


@dataclass(frozen=True)
class HyperConfig:
    """Outer-loop settings.

    ``lambda_init=None`` starts at ``0.1 * lambda_max``.
    """

    beta: float = 6e-5
    lambda_init: Optional[float] = None
    max_outer: int = 500
    outer_tol: float = 1e-6
    inner: PgdConfig = field(default_factory=PgdConfig)
    z_mode: str = "linear_solve"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.lambda_init is not None and self.lambda_init < 0:
            raise ValueError(f"lambda_init must be nonnegative, got {self.lambda_init}")
        if self.max_outer < 1:
            raise ValueError(f"max_outer must be >= 1, got {self.max_outer}")
        if self.z_mode not in Z_MODES:
            raise ValueError(f"z_mode must be one of {Z_MODES}, got {self.z_mode!r}")


@dataclass(frozen=True)
class TrajectoryRecord:
    k: int
    fold_j: Optional[int]  # None for batch (HSGD) steps
    lambda_eval: float  # lambda at which the hypergradient was computed
    lambda_: float  # lambda after the projected update
    lambda_trailing_avg: float
    hypergrad: float
    inner_iters: int
    cum_inner_iters: int
    val_error: Optional[float] = None
    n_unconverged: int = 0
    z_fallback: bool = False


@dataclass
class HyperTrajectory:
    records: list[TrajectoryRecord] = field(default_factory=list)
    window: int = 1

    def __len__(self):
        return len(self.records)

    @property
    def lambdas(self) -> NDArray:
        return np.array([r.lambda_ for r in self.records])

    @property
    def cum_inner_iters(self) -> NDArray:
        return np.array([r.cum_inner_iters for r in self.records], dtype=int)

    @property
    def final_lambda(self) -> float:
        """Mean of the last ``window`` lambda iterates (the last one for HSGD)."""
        if not self.records:
            raise ValueError("empty trajectory")
        return float(np.mean(self.lambdas[-self.window:]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "fold_j", "lambda", "lambda_trailing_avg", "hypergrad", "cum_inner_iters"])
            for r in self.records:
                w.writerow([
                    r.k,
                    "" if r.fold_j is None else r.fold_j,
                    repr(r.lambda_),
                    repr(r.lambda_trailing_avg),
                    repr(r.hypergrad),
                    r.cum_inner_iters,
                ])


# ---------------------------------------------------------------------------
# Sensitivities
# ---------------------------------------------------------------------------


def z_tilde(stats_j: SufficientStats, sub: SubJacobian, alpha: float, mode: str = "linear_solve") -> NDArray:
    """Sensitivity ``dw*/dlam`` solving ``(I - A (I - alpha phi_j)) z = b``.

    Modes
    -----
    linear_solve
        Dense LU solve; raises :class:`SingularSystemError` when the matrix is
        numerically singular.
    least_squares
        Minimum-norm least-squares solution.
    iterative
        Forward recursion ``z <- A (I - alpha phi_j) z + b`` from ``z = b``,
        stopped at a step below 1e-10 or after ``10 P`` sweeps.
    """
    a, b = sub.a_diag, sub.b
    p = b.shape[0]
    m = np.eye(p) - alpha * stats_j.phi  # I - alpha phi
    if mode == "iterative":
        z = b.copy()
        for _ in range(10 * p):
            z_new = a * (m @ z) + b
            done = np.max(np.abs(z_new - z)) <= 1e-10
            z = z_new
            if done:
                break
        return z
    lhs = np.eye(p) - a[:, None] * m
    if mode == "least_squares":
        return np.linalg.lstsq(lhs, b, rcond=None)[0]
    if mode != "linear_solve":
        raise ValueError(f"unknown z mode {mode!r}")
    # rows with a == 0 are identity rows, so only the active block can be singular
    act = a != 0
    if np.any(act):
        block = lhs[np.ix_(act, act)]
        if np.linalg.cond(block) > 1e12:
            raise SingularSystemError("sensitivity system is singular")
    try:
        return np.linalg.solve(lhs, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from None


def val_gradient(x_j, y_j: float, w) -> NDArray:
    """``x_j (x_j^T w - y_j)``, half the gradient of ``(y_j - x_j^T w)^2``."""
    x_j = np.asarray(x_j, dtype=float)
    return x_j * (x_j @ w - y_j)


def _sensitivity(stats, reg, res: PgdResult, alpha, lam, mode):
    sub = reg.subderivatives(res.w_f, alpha, lam)
    try:
        return z_tilde(stats, sub, alpha, mode), False
    except SingularSystemError:
        logger.debug("singular sensitivity system at lambda=%g, using least squares", lam)
        return z_tilde(stats, sub, alpha, "least_squares"), True


def fold_hypergradient(
    dataset: Dataset,
    folds: FoldSet,
    i: int,
    reg: Regularizer,
    lam: float,
    res: PgdResult,
    alpha: float,
    mode: str = "linear_solve",
) -> tuple[float, bool]:
    """Stochastic hypergradient of fold ``i`` given its inner solution ``res``.

    Returns the value and whether the least-squares fallback was used.
    """
    fold = folds[i]
    z, fallback = _sensitivity(fold.stats, reg, res, alpha, lam, mode)
    xv = dataset.inputs[fold.val_index]
    resid = xv @ res.w - dataset.labels[fold.val_index]
    # sum_j z^T x_j (x_j^T w - y_j)
    total = float((xv @ z) @ resid)
    return total * len(folds) / folds.n_validation, fallback


def _fold_components(dataset, folds, reg, lam, results, alpha, mode):
    out = [fold_hypergradient(dataset, folds, i, reg, lam, r, alpha, mode) for i, r in enumerate(results)]
    return np.array([h for h, _ in out]), any(f for _, f in out)


def lambda_max(dataset: Dataset, reg: Regularizer) -> float:
    """Smallest lambda whose full-data solution is zero."""
    return reg.dual_norm(compute_stats(dataset).r)


def _setup(dataset, reg, scheme, cfg):
    stats = compute_stats(dataset)
    reg.check_dim(dataset.n_features)
    folds = scheme if isinstance(scheme, FoldSet) else make_folds(scheme, dataset, stats)
    alpha = folds.alpha if cfg.inner.alpha is None else cfg.inner.alpha
    inner = PgdConfig(alpha, cfg.inner.tol, cfg.inner.max_iters)
    lam0 = cfg.lambda_init
    if lam0 is None:
        lam0 = 0.1 * reg.dual_norm(stats.r)
    return folds, inner, alpha, float(lam0)


def batch_hypergradient(
    dataset: Dataset,
    reg: Regularizer,
    scheme,
    lam: float,
    inner_cfg: PgdConfig,
    z_mode: str = "linear_solve",
    threads: int = 1,
) -> tuple[float, NDArray]:
    """Batch hypergradient at ``lam`` and the per-fold stochastic components.

    ``scheme`` may be a validation scheme or an already built :class:`FoldSet`.
    """
    folds, inner, alpha, _ = _setup(dataset, reg, scheme, HyperConfig(inner=inner_cfg, z_mode=z_mode))
    results = solve_folds(folds, reg, lam, inner, threads=threads)
    comps, _ = _fold_components(dataset, folds, reg, lam, results, alpha, z_mode)
    return float(np.mean(comps)), comps


# ---------------------------------------------------------------------------
# HSGD
# ---------------------------------------------------------------------------


def hsgd_step(
    lam: float,
    dataset: Dataset,
    folds: FoldSet,
    reg: Regularizer,
    alpha: float,
    cfg: HyperConfig,
    warm_cache: list,
    k: int = 0,
    cum_iters: int = 0,
    threads: int = 1,
) -> tuple[float, float, TrajectoryRecord]:
    """One batch step: solve every fold, form the hypergradient, project.

    ``warm_cache`` (one weight vector or ``None`` per fold) is updated in place.
    """
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    inner = PgdConfig(alpha, cfg.inner.tol, cfg.inner.max_iters)
    results = solve_folds(folds, reg, lam, inner, warm_cache, threads)
    comps, fallback = _fold_components(dataset, folds, reg, lam, results, alpha, cfg.z_mode)
    h = float(np.mean(comps))
    lam_next = max(lam - cfg.beta * len(folds) * h, 0.0)
    for i, r in enumerate(results):
        warm_cache[i] = r.w
    iters = sum(r.iters for r in results)
    sq = 0.0
    for fold, r in zip(folds, results):
        e = dataset.labels[fold.val_index] - dataset.inputs[fold.val_index] @ r.w
        sq += float(e @ e)
    rec = TrajectoryRecord(
        k=k,
        fold_j=None,
        lambda_eval=lam,
        lambda_=lam_next,
        lambda_trailing_avg=lam_next,
        hypergrad=h,
        inner_iters=iters,
        cum_inner_iters=cum_iters + iters,
        val_error=sq / folds.n_validation,
        n_unconverged=sum(not r.converged for r in results),
        z_fallback=fallback,
    )
    return lam_next, h, rec


def hsgd_run(
    dataset: Dataset,
    reg: Regularizer,
    scheme,
    cfg: HyperConfig,
    threads: int = 1,
) -> HyperTrajectory:
    """Batch hyper-subgradient descent until ``|hypergrad| <= outer_tol`` or ``max_outer``."""
    folds, _, alpha, lam = _setup(dataset, reg, scheme, cfg)
    warm = [None] * len(folds)
    traj = HyperTrajectory(window=1)
    cum = 0
    for k in range(1, cfg.max_outer + 1):
        lam, h, rec = hsgd_step(lam, dataset, folds, reg, alpha, cfg, warm, k, cum, threads)
        cum = rec.cum_inner_iters
        traj.records.append(rec)
        if not np.isfinite(lam):
            logger.warning("HSGD diverged at outer iteration %d", k)
            break
        if abs(h) <= cfg.outer_tol:
            break
    return traj


# ---------------------------------------------------------------------------
# OHSGD
# ---------------------------------------------------------------------------


def ohsgd_run(
    dataset: Dataset,
    reg: Regularizer,
    scheme,
    cfg: HyperConfig,
) -> HyperTrajectory:
    """Online variant: one fold per lambda update, cycling ``j = k mod F``.

    Each fold's inner solve is warm-started at that fold's previous solution.
    The reported estimate is the mean of the last ``F`` iterates; the run
    stops when that mean moves by at most ``outer_tol`` over a full sweep,
    or after ``max_outer`` updates.
    """
    folds, inner, alpha, lam = _setup(dataset, reg, scheme, cfg)
    n_f = len(folds)
    warm: list = [None] * n_f
    traj = HyperTrajectory(window=n_f)
    window: list[float] = []
    prev_avg = None
    cum = 0
    for k in range(cfg.max_outer):
        j = k % n_f
        res = pgd_solve(folds[j].stats, reg, lam, inner, warm[j])
        warm[j] = res.w
        h, fallback = fold_hypergradient(dataset, folds, j, reg, lam, res, alpha, cfg.z_mode)
        lam_next = max(lam - cfg.beta * h, 0.0)
        window.append(lam_next)
        if len(window) > n_f:
            window.pop(0)
        avg = float(np.mean(window))
        cum += res.iters
        traj.records.append(
            TrajectoryRecord(
                k=k,
                fold_j=j,
                lambda_eval=lam,
                lambda_=lam_next,
                lambda_trailing_avg=avg,
                hypergrad=h,
                inner_iters=res.iters,
                cum_inner_iters=cum,
                n_unconverged=int(not res.converged),
                z_fallback=fallback,
            )
        )
        lam = lam_next
        if not np.isfinite(lam):
            logger.warning("OHSGD diverged at update %d", k)
            break
        if (k + 1) % n_f == 0 and k + 1 >= 2 * n_f:
            if prev_avg is not None and abs(avg - prev_avg) <= cfg.outer_tol:
                break
        if (k + 1) % n_f == 0:
            prev_avg = avg
    return traj


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------


def fd_hypergradient(
    dataset: Dataset,
    reg: Regularizer,
    scheme,
    lam: float,
    delta: float = 1e-5,
    tol: float = 1e-10,
    max_iters: int = 1_000_000,
) -> float:
    """Central difference of the validation error, ``(E(lam+d) - E(lam-d)) / 2d``.

    This is the derivative of the mean squared validation error, i.e. twice
    the batch hypergradient.
    """
    if lam - delta < 0:
        raise ValueError("lam - delta must be nonnegative")
    folds = scheme if isinstance(scheme, FoldSet) else make_folds(scheme, dataset)
    cfg = PgdConfig(folds.alpha, tol, max_iters)
    hi = validation_error(dataset, reg, None, lam + delta, cfg, folds=folds)
    lo = validation_error(dataset, reg, None, lam - delta, cfg, folds=folds)
    return (hi - lo) / (2 * delta)
