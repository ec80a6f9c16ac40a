"""Datasets, synthetic generation and least-squares sufficient statistics.

The quadratic loss of a linear model over a sample set only enters the
solvers through the averaged second moments ``phi = mean(x x^T)`` and
``r = mean(y x)``.  Removing one sample from those averages is a rank-one
downdate, which is what makes leave-one-out validation cheap.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "Dataset",
    "SufficientStats",
    "SyntheticSpec",
    "load_csv",
    "save_csv",
    "generate_synthetic",
    "generate_group_sparse",
    "compute_stats",
    "loo_downdate",
    "loo_update",
    "label_energy",
    "spectral_radius",
]


class DataError(ValueError):
    """Raised for malformed datasets or CSV files."""


@dataclass(frozen=True)
class Dataset:
    """Input vectors (rows of ``inputs``) paired with scalar labels."""

    inputs: NDArray[np.float64]
    labels: NDArray[np.float64]

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if inputs.shape[0] != labels.shape[0]:
            raise DataError(
                f"inputs have {inputs.shape[0]} rows but labels have {labels.shape[0]} entries"
            )
        if inputs.shape[0] < 2 or inputs.shape[1] < 1:
            raise DataError(f"need N >= 2 samples and P >= 1 features, got shape {inputs.shape}")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(labels))):
            raise DataError("dataset contains non-finite entries")
        inputs.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index) -> "Dataset":
        return Dataset(self.inputs[index], self.labels[index])


@dataclass(frozen=True)
class SufficientStats:
    """Sample averages ``phi = mean(x x^T)``, ``r = mean(y x)`` over ``count`` samples."""

    phi: NDArray[np.float64]
    r: NDArray[np.float64]
    count: int

    @property
    def dim(self) -> int:
        return self.r.shape[0]


@dataclass(frozen=True)
class SyntheticSpec:
    """Sparse linear-Gaussian generative model.

    Inputs and the nonzero entries of ``w_true`` are standard normal; the
    noise variance is ``||w_true||^2 / snr`` so that the ratio of signal to
    noise power equals ``snr`` (linear scale, not dB).  ``snr=inf`` gives
    noiseless labels.
    """

    dim: int = 100
    sparsity: int = 10
    n_train: int = 200
    n_test: int = 2000
    snr: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if not 0 <= self.sparsity <= self.dim:
            raise ValueError(f"sparsity ({self.sparsity}) must lie in [0, dim={self.dim}]")
        if self.n_train < 2:
            raise ValueError(f"n_train must be >= 2, got {self.n_train}")
        if self.n_test < 2:
            raise ValueError(f"n_test must be >= 2, got {self.n_test}")
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def load_csv(path, header: bool = False) -> Dataset:
    """Read a dataset whose rows are ``x_1, ..., x_P, y``.

    Parameters
    ----------
    path : path-like
        Comma separated file, ``.`` as decimal mark.
    header : bool
        Skip the first line.
    """
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
            if width is None:
                width = len(values)
                if width < 2:
                    raise DataError(f"{path}: line {lineno}: need at least one feature and a label")
            elif len(values) != width:
                raise DataError(
                    f"{path}: line {lineno}: expected {width} fields, found {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: empty file")
    arr = np.array(rows, dtype=float)
    return Dataset(arr[:, :-1], arr[:, -1])


def _fmt(v: float) -> str:
    # repr gives the shortest string that round-trips exactly
    return repr(float(v))


def save_csv(dataset: Dataset, path, header: bool = False) -> None:
    """Write ``dataset`` in the format read by :func:`load_csv`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"x{i}" for i in range(dataset.n_features)] + ["y"])
        for x, y in zip(dataset.inputs, dataset.labels):
            writer.writerow([_fmt(v) for v in x] + [_fmt(y)])


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def _noise_std(w_true: NDArray, snr: float) -> float:
    if math.isinf(snr):
        return 0.0
    return math.sqrt(float(w_true @ w_true) / snr)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset, NDArray]:
    """Draw train and test sets from the same sparse linear model.

    Each random quantity has its own PCG64 substream spawned from
    ``spec.seed`` (order: train inputs, test inputs, support, values,
    train noise, test noise), so changing ``n_test`` leaves the training
    set untouched.

    Returns
    -------
    train, test : Dataset
    w_true : ndarray, shape (dim,)
    """
    g_xtr, g_xte, g_supp, g_val, g_etr, g_ete = _streams(spec.seed, 6)
    w_true = np.zeros(spec.dim)
    support = np.sort(g_supp.choice(spec.dim, size=spec.sparsity, replace=False))
    w_true[support] = g_val.standard_normal(spec.sparsity)
    sigma = _noise_std(w_true, spec.snr)

    def draw(gx, ge, n):
        x = gx.standard_normal((n, spec.dim))
        return x, x @ w_true + sigma * ge.standard_normal(n)

    xtr, ytr = draw(g_xtr, g_etr, spec.n_train)
    xte, yte = draw(g_xte, g_ete, spec.n_test)
    return Dataset(xtr, ytr), Dataset(xte, yte), w_true


def generate_group_sparse(
    spec: SyntheticSpec, group_size: int, n_active_groups: int
) -> tuple[Dataset, Dataset, NDArray]:
    """Like :func:`generate_synthetic` but ``w_true`` is supported on whole groups.

    Groups are the contiguous blocks ``[0, group_size), [group_size, 2 group_size), ...``;
    ``spec.sparsity`` is ignored.
    """
    if spec.dim % group_size:
        raise ValueError(f"dim={spec.dim} is not a multiple of group_size={group_size}")
    n_groups = spec.dim // group_size
    if not 0 <= n_active_groups <= n_groups:
        raise ValueError(f"n_active_groups must lie in [0, {n_groups}]")
    g_xtr, g_xte, g_supp, g_val, g_etr, g_ete = _streams(spec.seed, 6)
    w_true = np.zeros(spec.dim)
    active = np.sort(g_supp.choice(n_groups, size=n_active_groups, replace=False))
    idx = (active[:, None] * group_size + np.arange(group_size)).ravel()
    w_true[idx] = g_val.standard_normal(idx.size)
    sigma = _noise_std(w_true, spec.snr)
    xtr = g_xtr.standard_normal((spec.n_train, spec.dim))
    xte = g_xte.standard_normal((spec.n_test, spec.dim))
    ytr = xtr @ w_true + sigma * g_etr.standard_normal(spec.n_train)
    yte = xte @ w_true + sigma * g_ete.standard_normal(spec.n_test)
    return Dataset(xtr, ytr), Dataset(xte, yte), w_true


# ---------------------------------------------------------------------------
# Sufficient statistics
# ---------------------------------------------------------------------------


def compute_stats(d: Dataset) -> SufficientStats:
    """Averaged moments of ``d``: ``phi = X^T X / N``, ``r = X^T y / N``."""
    x, y = d.inputs, d.labels
    n = x.shape[0]
    if n == 0:
        raise DataError("cannot compute statistics of an empty dataset")
    phi = x.T @ x / n
    phi = 0.5 * (phi + phi.T)
    return SufficientStats(phi, x.T @ y / n, n)


def loo_downdate(s: SufficientStats, x_j, y_j: float) -> SufficientStats:
    """Remove sample ``(x_j, y_j)`` from the averages in ``s``."""
    if s.count < 2:
        raise DataError(f"cannot downdate statistics of {s.count} sample(s)")
    x_j = np.asarray(x_j, dtype=float)
    n = s.count
    phi = (n * s.phi - np.outer(x_j, x_j)) / (n - 1)
    r = (n * s.r - y_j * x_j) / (n - 1)
    return SufficientStats(phi, r, n - 1)


def loo_update(s: SufficientStats, x_j, y_j: float) -> SufficientStats:
    """Add sample ``(x_j, y_j)`` to the averages; inverse of :func:`loo_downdate`."""
    x_j = np.asarray(x_j, dtype=float)
    n = s.count
    phi = (n * s.phi + np.outer(x_j, x_j)) / (n + 1)
    r = (n * s.r + y_j * x_j) / (n + 1)
    return SufficientStats(phi, r, n + 1)


def label_energy(d: Dataset) -> float:
    """Mean squared label, the constant term of the averaged quadratic loss."""
    return float(d.labels @ d.labels / d.n_samples)


def spectral_radius(phi, tol: float = 1e-6, max_iters: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Starts from the normalized all-ones vector and stops when the Rayleigh
    quotient changes by less than ``tol`` relative.
    """
    phi = np.asarray(phi, dtype=float)
    v = np.ones(phi.shape[0]) / math.sqrt(phi.shape[0])
    u = phi @ v
    if not np.any(u):
        # all-ones can be in the null space of a nonzero matrix
        if not np.any(phi):
            raise ValueError("spectral radius of the zero matrix is undefined here")
        v = np.random.default_rng(0).standard_normal(phi.shape[0])
        v /= np.linalg.norm(v)
        u = phi @ v
    rho = float(v @ u)
    for _ in range(max_iters):
        v = u / np.linalg.norm(u)
        u = phi @ v
        new = float(v @ u)
        if abs(new - rho) <= tol * abs(new):
            return new
        rho = new
    return rho
