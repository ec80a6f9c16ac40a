"""Proximal gradient descent (ISTA) on averaged least squares.

The smooth part is written through the averaged moments ``phi``, ``r`` of a
training batch, with forward (gradient) operator ``F(w) = w - alpha (phi w - r)``.
Its fixed points with the prox are the minimizers of::

    0.5 * mean((y - X w)**2) + lam * penalty(w)

which is the objective evaluated by :func:`objective`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from .data import SufficientStats, spectral_radius
from .prox import Regularizer

__all__ = [
    "PgdConfig",
    "PgdResult",
    "default_step",
    "forward_step",
    "objective",
    "subgradient_residual",
    "pgd_solve",
]


@dataclass(frozen=True)
class PgdConfig:
    """Inner solver settings.

    ``alpha=None`` means "use ``1/rho(phi)`` of the full training set",
    resolved by the callers that own the data (see :func:`default_step`).
    """

    alpha: Optional[float] = None
    tol: float = 1e-3
    max_iters: int = 50_000

    def __post_init__(self):
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")

    def with_step(self, stats: SufficientStats) -> "PgdConfig":
        if self.alpha is not None:
            return self
        return replace(self, alpha=default_step(stats))


@dataclass(frozen=True)
class PgdResult:
    w: NDArray
    w_f: NDArray
    iters: int
    residual: float
    converged: bool


def default_step(stats: SufficientStats) -> float:
    """``1 / rho(phi)``, the constant step used throughout."""
    return 1.0 / spectral_radius(stats.phi, tol=1e-10)


def forward_step(stats: SufficientStats, w, alpha: float) -> NDArray:
    """Gradient step ``w - alpha (phi w - r)``."""
    return w - alpha * (stats.phi @ w - stats.r)


def objective(stats: SufficientStats, reg: Regularizer, lam: float, w, label_energy: float) -> float:
    """``0.5 mean((y - X w)^2) + lam * penalty(w)`` computed from the moments.

    ``label_energy`` is ``mean(y**2)`` over the same batch.
    """
    w = np.asarray(w, dtype=float)
    reg.check_dim(w.shape[-1])
    quad = 0.5 * (w @ stats.phi @ w) - stats.r @ w + 0.5 * label_energy
    return float(quad + lam * reg.penalty(w))


def _residual(stats, reg, lam, w, g=None):
    if g is None:
        g = stats.phi @ w - stats.r
    return float(np.linalg.norm(reg.residual_terms(g, w, lam)))


def subgradient_residual(stats: SufficientStats, reg: Regularizer, lam: float, w) -> float:
    """Distance from 0 to the subdifferential of the objective at ``w``."""
    w = np.asarray(w, dtype=float)
    reg.check_dim(w.shape[-1])
    return _residual(stats, reg, lam, w)


def pgd_solve(
    stats: SufficientStats,
    reg: Regularizer,
    lam: float,
    cfg: PgdConfig,
    warm_start=None,
) -> PgdResult:
    """Run ``w <- prox(F(w), alpha*lam)`` until the subgradient residual is below ``cfg.tol``.

    At least one iteration is always taken, so ``w == prox(w_f)`` holds for
    the returned pair even when the warm start is already optimal.
    Hitting ``max_iters`` is reported through ``converged=False``.
    """
    if cfg.alpha is None:
        cfg = cfg.with_step(stats)
    alpha, phi, r = cfg.alpha, stats.phi, stats.r
    kappa = alpha * lam
    w = np.zeros(stats.dim) if warm_start is None else np.array(warm_start, dtype=float)
    reg.check_dim(w.shape[0])
    g = phi @ w - r
    for it in range(1, cfg.max_iters + 1):
        w_f = w - alpha * g
        w = reg.prox(w_f, kappa)
        g = phi @ w - r
        res = _residual(stats, reg, lam, w, g)
        if res <= cfg.tol:
            return PgdResult(w, w_f, it, res, True)
    return PgdResult(w, w_f, cfg.max_iters, res, False)
