"""Independent reference computations used by the tests.

Nothing here calls into the package's solver or hypergradient code.
"""

import numpy as np


def naive_stats(x, y):
    n, p = x.shape
    phi = np.zeros((p, p))
    r = np.zeros(p)
    for i in range(n):
        for a in range(p):
            r[a] += y[i] * x[i, a]
            for b in range(p):
                phi[a, b] += x[i, a] * x[i, b]
    return phi / n, r / n


def soft(v, t):
    return np.sign(v) * max(abs(v) - t, 0.0)


def lasso_cd(phi, r, lam, tol=1e-14, max_sweeps=200_000):
    """Cyclic coordinate descent for 0.5 w'phi w - r'w + lam ||w||_1."""
    p = r.shape[0]
    w = np.zeros(p)
    for _ in range(max_sweeps):
        delta = 0.0
        for n in range(p):
            if phi[n, n] == 0:
                continue
            rho = r[n] - phi[n] @ w + phi[n, n] * w[n]
            new = soft(rho, lam) / phi[n, n]
            delta = max(delta, abs(new - w[n]))
            w[n] = new
        if delta < tol:
            break
    return w


def lasso_objective(phi, r, lam, w):
    return 0.5 * w @ phi @ w - r @ w + lam * np.abs(w).sum()


def two_point_loo(x1, y1, x2, y2, lam):
    """Closed-form LOO error of scalar Lasso on two samples (P=1)."""

    def fit(x, y):
        return soft(x * y, lam) / (x * x)

    w1 = fit(x2, y2)  # trained without sample 1
    w2 = fit(x1, y1)
    return 0.5 * ((y1 - x1 * w1) ** 2 + (y2 - x2 * w2) ** 2)


def random_problem(rng, n, p, sparsity=None, noise=0.5):
    x = rng.standard_normal((n, p))
    w = np.zeros(p)
    k = p if sparsity is None else sparsity
    w[rng.choice(p, size=k, replace=False)] = rng.standard_normal(k)
    y = x @ w + noise * rng.standard_normal(n)
    return x, y
