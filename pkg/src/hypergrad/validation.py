"""Validation schemes, validation error and the grid-search baseline."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .data import Dataset, SufficientStats, compute_stats, loo_downdate, spectral_radius
from .prox import Regularizer
from .solver import PgdConfig, PgdResult, pgd_solve

__all__ = [
    "HeldOut",
    "KFold",
    "LOO",
    "Fold",
    "FoldSet",
    "ErrorCurve",
    "make_folds",
    "solve_folds",
    "fold_errors",
    "validation_error",
    "default_grid",
    "grid_search",
    "test_error",
]


@dataclass(frozen=True)
class HeldOut:
    """One training batch and a disjoint validation set of ``fraction * N`` samples."""

    fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.fraction < 1:
            raise ValueError(f"held-out fraction must lie in (0, 1), got {self.fraction}")


@dataclass(frozen=True)
class KFold:
    n_folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError(f"n_folds must be >= 2, got {self.n_folds}")


@dataclass(frozen=True)
class LOO:
    pass


ValidationScheme = Union[HeldOut, KFold, LOO]


@dataclass(frozen=True)
class Fold:
    """Validation sample indices and the moments of the matching training batch."""

    val_index: NDArray
    stats: SufficientStats


@dataclass(frozen=True)
class FoldSet:
    folds: list[Fold]
    alpha: float
    n_validation: int

    def __len__(self):
        return len(self.folds)

    def __iter__(self):
        return iter(self.folds)

    def __getitem__(self, i):
        return self.folds[i]


def make_folds(scheme: ValidationScheme, dataset: Dataset, global_stats: Optional[SufficientStats] = None) -> FoldSet:
    """Split ``dataset`` according to ``scheme``.

    LOO fold statistics are rank-one downdates of ``global_stats``.  The PGD
    step is ``1/rho(phi)`` of the whole set for LOO; for held-out and
    K-fold the smaller batches can have a larger curvature, so the step is
    ``1/rho`` of the stiffest batch instead.
    """
    n = dataset.n_samples
    x, y = dataset.inputs, dataset.labels
    if global_stats is None:
        global_stats = compute_stats(dataset)
    rho = spectral_radius(global_stats.phi, tol=1e-10)

    if isinstance(scheme, LOO):
        folds = [Fold(np.array([j]), loo_downdate(global_stats, x[j], y[j])) for j in range(n)]
        return FoldSet(folds, 1.0 / rho, n)

    if isinstance(scheme, KFold):
        if scheme.n_folds > n:
            raise ValueError(f"n_folds={scheme.n_folds} exceeds the number of samples {n}")
        perm = np.random.default_rng(scheme.seed).permutation(n)
        parts = [np.sort(p) for p in np.array_split(perm, scheme.n_folds)]
    elif isinstance(scheme, HeldOut):
        n_val = min(max(int(round(scheme.fraction * n)), 1), n - 1)
        perm = np.random.default_rng(scheme.seed).permutation(n)
        parts = [np.sort(perm[:n_val])]
    else:
        raise TypeError(f"unknown validation scheme {scheme!r}")

    folds = []
    for part in parts:
        mask = np.ones(n, dtype=bool)
        mask[part] = False
        folds.append(Fold(part, compute_stats(dataset.subset(mask))))
    rho = max(rho, *(spectral_radius(f.stats.phi, tol=1e-10) for f in folds))
    return FoldSet(folds, 1.0 / rho, sum(p.size for p in parts))


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def solve_folds(
    folds: FoldSet,
    reg: Regularizer,
    lam: float,
    cfg: PgdConfig,
    warm: Optional[Sequence] = None,
    threads: int = 1,
) -> list[PgdResult]:
    """Solve every fold's training problem; results come back in fold order."""
    if cfg.alpha is None:
        cfg = PgdConfig(folds.alpha, cfg.tol, cfg.max_iters)

    def one(i):
        return pgd_solve(folds[i].stats, reg, lam, cfg, None if warm is None else warm[i])

    return _map(one, range(len(folds)), threads)


def fold_errors(dataset: Dataset, folds: FoldSet, results: Sequence[PgdResult]) -> NDArray:
    """Sum of squared validation errors of each fold."""
    out = np.empty(len(folds))
    for i, (fold, res) in enumerate(zip(folds, results)):
        e = dataset.labels[fold.val_index] - dataset.inputs[fold.val_index] @ res.w
        out[i] = e @ e
    return out


def validation_error(
    dataset: Dataset,
    reg: Regularizer,
    scheme: ValidationScheme,
    lam: float,
    inner_cfg: PgdConfig,
    folds: Optional[FoldSet] = None,
    threads: int = 1,
) -> float:
    """Mean squared validation error at ``lam`` (the LOO error for :class:`LOO`)."""
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if folds is None:
        folds = make_folds(scheme, dataset)
    results = solve_folds(folds, reg, lam, inner_cfg, threads=threads)
    return float(fold_errors(dataset, folds, results).sum() / folds.n_validation)


def test_error(test: Dataset, w) -> float:
    """Mean squared prediction error of weights ``w`` on ``test``."""
    e = test.labels - test.inputs @ np.asarray(w, dtype=float)
    return float(e @ e / test.n_samples)


@dataclass
class ErrorCurve:
    lambdas: NDArray
    val_errors: NDArray
    test_errors: Optional[NDArray] = None
    unconverged: bool = False
    inner_iters: int = 0

    @property
    def argmin(self) -> float:
        return float(self.lambdas[int(np.argmin(self.val_errors))])

    def to_csv(self, path) -> None:
        """Write ``lambda,loo_error,test_error`` rows; empty test column when absent."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "loo_error", "test_error"])
            for i, lam in enumerate(self.lambdas):
                t = "" if self.test_errors is None else repr(float(self.test_errors[i]))
                w.writerow([repr(float(lam)), repr(float(self.val_errors[i])), t])


def default_grid(lam_max: float, n: int = 50, ratio: float = 1e-3) -> NDArray:
    """``n`` log-spaced values from ``ratio * lam_max`` to ``lam_max``."""
    return np.geomspace(ratio * lam_max, lam_max, n)


def grid_search(
    dataset: Dataset,
    reg: Regularizer,
    scheme: ValidationScheme,
    grid,
    inner_cfg: PgdConfig,
    test_set: Optional[Dataset] = None,
    folds: Optional[FoldSet] = None,
    threads: int = 1,
) -> ErrorCurve:
    """Validation (and optionally test) error over a sorted grid of lambdas.

    The grid is swept from the largest value down, each fold warm-started at
    its solution for the previous grid point.  Test errors use weights fit on
    the full ``dataset``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be a nonempty, strictly increasing list of nonnegative values")
    full = compute_stats(dataset)
    if folds is None:
        folds = make_folds(scheme, dataset, full)
    cfg = PgdConfig(folds.alpha if inner_cfg.alpha is None else inner_cfg.alpha, inner_cfg.tol, inner_cfg.max_iters)

    val = np.empty(grid.size)
    tst = None if test_set is None else np.empty(grid.size)
    warm = None
    w_full = None
    unconverged = False
    iters = 0
    for i in range(grid.size - 1, -1, -1):
        results = solve_folds(folds, reg, grid[i], cfg, warm, threads)
        warm = [r.w for r in results]
        unconverged |= not all(r.converged for r in results)
        iters += sum(r.iters for r in results)
        val[i] = fold_errors(dataset, folds, results).sum() / folds.n_validation
        if test_set is not None:
            res = pgd_solve(full, reg, grid[i], cfg, w_full)
            w_full = res.w
            tst[i] = test_error(test_set, res.w)
    return ErrorCurve(grid, val, tst, unconverged, iters)
