"""Lasso and Group Lasso penalties, their prox operators and sub-Jacobians.

All array functions accept a single vector of shape ``(P,)`` or a stack of
vectors of shape ``(F, P)``; the penalty acts on the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "GroupStructure",
    "Lasso",
    "GroupLasso",
    "SubJacobian",
    "penalty",
    "prox",
    "subderivatives",
]


class GroupStructure:
    """A partition of the coordinates ``0 .. P-1`` into nonempty groups.

    Parameters
    ----------
    groups : sequence of sequences of int
        Index sets; must be disjoint and cover ``range(P)``.
    """

    def __init__(self, groups: Sequence[Sequence[int]]):
        groups = [np.asarray(g, dtype=int).reshape(-1) for g in groups]
        if not groups or any(g.size == 0 for g in groups):
            raise ValueError("groups must be a nonempty list of nonempty index sets")
        flat = np.concatenate(groups)
        dim = flat.size
        if flat.min() < 0 or np.bincount(flat, minlength=dim).tolist() != [1] * dim:
            raise ValueError("groups must form a partition of range(P)")
        self.groups = groups
        self.dim = dim
        self.group_of = np.empty(dim, dtype=int)
        for k, g in enumerate(groups):
            self.group_of[g] = k
        # membership matrix: (w**2) @ member gives squared group norms
        self.member = np.zeros((dim, len(groups)))
        self.member[np.arange(dim), self.group_of] = 1.0
        sizes = {g.size for g in groups}
        contiguous = np.array_equal(np.concatenate(groups), np.arange(dim))
        # fast paths: singletons give |w_n| exactly; equal contiguous blocks reshape
        self._singletons = sizes == {1}
        self._block = sizes.pop() if contiguous and len(sizes) == 1 else None
        self._order = np.concatenate(groups)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "GroupStructure":
        """Contiguous groups of the given sizes."""
        bounds = np.cumsum([0, *sizes])
        return cls([range(a, b) for a, b in zip(bounds[:-1], bounds[1:])])

    @classmethod
    def uniform(cls, dim: int, size: int) -> "GroupStructure":
        if dim % size:
            raise ValueError(f"dim={dim} is not a multiple of group size {size}")
        return cls.from_sizes([size] * (dim // size))

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def norms(self, w: NDArray) -> NDArray:
        """Euclidean norm of every group, shape ``w.shape[:-1] + (n_groups,)``."""
        if self._singletons:
            return np.abs(w[..., self._order])
        if self._block is not None:
            b = w.reshape(w.shape[:-1] + (-1, self._block))
            return np.sqrt(np.einsum("...ij,...ij->...i", b, b))
        return np.sqrt((w * w) @ self.member)

    def expand(self, v: NDArray) -> NDArray:
        """Broadcast per-group values back to coordinates."""
        if self._block is not None:
            return np.repeat(v, self._block, axis=-1)
        return v[..., self.group_of]

    def __eq__(self, other):
        return isinstance(other, GroupStructure) and all(
            np.array_equal(a, b) for a, b in zip(self.groups, other.groups)
        ) and len(self.groups) == len(other.groups)

    def __repr__(self):
        return f"GroupStructure(n_groups={self.n_groups}, dim={self.dim})"


@dataclass(frozen=True)
class SubJacobian:
    """Diagonal of the sub-Jacobian w.r.t. the prox input, and the one w.r.t. lambda.

    ``b`` already carries the factor ``alpha`` of the threshold ``alpha*lambda``.
    """

    a_diag: NDArray
    b: NDArray


def _check_kappa(kappa):
    if kappa < 0:
        raise ValueError(f"threshold must be nonnegative, got {kappa}")


def _shrink_factor(norm, kappa):
    # [1 - kappa/norm]_+; dividing only where norm > kappa avoids 0/0 and overflow
    q = np.divide(kappa, norm, out=np.ones_like(norm), where=norm > kappa)
    return 1.0 - q


class Lasso:
    """l1 penalty ``||w||_1``; its prox is entrywise soft-thresholding."""

    name = "lasso"

    def check_dim(self, dim: int) -> None:
        pass

    def penalty(self, w):
        return np.sum(np.abs(w), axis=-1)

    def prox(self, w_f, kappa):
        _check_kappa(kappa)
        return w_f * _shrink_factor(np.abs(w_f), kappa)

    def subderivatives(self, w_f, alpha, lam) -> SubJacobian:
        t = alpha * lam
        a = (np.abs(w_f) >= t).astype(float)
        b = alpha * ((w_f <= -t).astype(float) - (w_f >= t).astype(float))
        return SubJacobian(a, b)

    def residual_terms(self, g, w, lam):
        """Per-coordinate distance from 0 to ``g + lam * d|w|``."""
        return np.where(w != 0, np.abs(g + lam * np.sign(w)), np.maximum(np.abs(g) - lam, 0.0))

    def dual_norm(self, v) -> float:
        """``||v||_inf``; the smallest lambda with an all-zero solution is ``dual_norm(r)``."""
        return float(np.max(np.abs(v)))

    def __eq__(self, other):
        return isinstance(other, Lasso)

    def __repr__(self):
        return "Lasso()"


class GroupLasso:
    """Mixed l2,1 penalty ``sum_g ||w_g||_2``; its prox shrinks whole groups."""

    name = "group_lasso"

    def __init__(self, groups: GroupStructure):
        self.groups = groups

    def check_dim(self, dim: int) -> None:
        if dim != self.groups.dim:
            raise ValueError(f"group structure covers {self.groups.dim} coordinates, got {dim}")

    def penalty(self, w):
        return np.sum(self.groups.norms(w), axis=-1)

    def prox(self, w_f, kappa):
        _check_kappa(kappa)
        norms = self.groups.norms(w_f)
        return w_f * self.groups.expand(_shrink_factor(norms, kappa))

    def subderivatives(self, w_f, alpha, lam) -> SubJacobian:
        # Diagonal indicator for the input sub-Jacobian; inside an active group
        # the true Jacobian has off-diagonal terms which are deliberately dropped.
        t = alpha * lam
        norms = self.groups.expand(self.groups.norms(w_f))
        active = norms >= t
        with np.errstate(divide="ignore", invalid="ignore"):
            b = np.where(active & (norms > 0), -alpha * w_f / norms, 0.0)
        return SubJacobian(active.astype(float), b)

    def residual_terms(self, g, w, lam):
        """Per-group distance from 0 to ``g_K + lam * d||w_K||``."""
        gs = self.groups
        wn = gs.norms(w)
        safe = np.where(wn > 0, wn, 1.0)
        active = gs.norms(g + lam * w / gs.expand(safe))
        inactive = np.maximum(gs.norms(g) - lam, 0.0)
        return np.where(wn > 0, active, inactive)

    def dual_norm(self, v) -> float:
        """Largest group norm of ``v``."""
        return float(np.max(self.groups.norms(v)))

    def __eq__(self, other):
        return isinstance(other, GroupLasso) and self.groups == other.groups

    def __repr__(self):
        return f"GroupLasso({self.groups!r})"


Regularizer = Lasso | GroupLasso


def _check(reg, w):
    reg.check_dim(np.shape(w)[-1])


def penalty(reg: Regularizer, w) -> float:
    """Value of the penalty (without the lambda weight)."""
    w = np.asarray(w, dtype=float)
    _check(reg, w)
    return reg.penalty(w)


def prox(reg: Regularizer, w_f, kappa: float) -> NDArray:
    """Prox of ``kappa * penalty`` evaluated at ``w_f``; ``kappa = alpha * lambda``."""
    w_f = np.asarray(w_f, dtype=float)
    _check(reg, w_f)
    return reg.prox(w_f, kappa)


def subderivatives(reg: Regularizer, w_f, alpha: float, lam: float) -> SubJacobian:
    """Sub-Jacobians of ``prox(reg, ., alpha*lam)`` at ``w_f`` w.r.t. ``w_f`` and ``lam``.

    Thresholds use ``>=``, so a coordinate (or group) sitting exactly on the
    threshold counts as active.
    """
    w_f = np.asarray(w_f, dtype=float)
    _check(reg, w_f)
    return reg.subderivatives(w_f, alpha, lam)
