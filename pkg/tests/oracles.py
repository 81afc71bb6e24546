"""Independent reference computations used by the tests.

Nothing here imports the fitting code under test.
"""

import numpy as np
from scipy.optimize import minimize
from scipy.special import huber


def huber_objective(y, mu, alpha, sigma, k):
    r = (y - mu[:, None] - alpha[None, :]) / sigma
    return float(huber(k, r).sum())


def least_squares_fit(y):
    """Closed-form two-way additive fit with zero-sum probe effects."""
    mu = y.mean(axis=1)
    alpha = y.mean(axis=0) - y.mean()
    return mu, alpha


def brute_force_huber(y, sigma, k, restarts=8):
    """Minimize the Huber objective at a frozen scale with Powell's method.

    Parameters are ``(mu, alpha[:-1])``; the last probe effect is minus the
    sum of the others.  Restarts from the previous optimum until the
    objective stops improving.
    """
    I, J = y.shape

    def unpack(p):
        return p[:I], np.r_[p[I:], -p[I:].sum()]

    def obj(p):
        mu, alpha = unpack(p)
        return huber_objective(y, mu, alpha, sigma, k)

    mu0, a0 = least_squares_fit(y)
    p = np.r_[mu0, a0[:-1]]
    best = obj(p)
    for _ in range(restarts):
        res = minimize(obj, p, method="Powell",
                       options={"xtol": 1e-12, "ftol": 1e-15, "maxiter": 200000, "maxfev": 200000})
        p = res.x
        if best - res.fun < 1e-15:
            best = min(best, res.fun)
            break
        best = res.fun
    mu, alpha = unpack(p)
    return mu, alpha, obj(p)


def huber_minimizer_is_unique(y, mu, alpha, sigma, k):
    """True when the cells in the quadratic zone pin down every parameter.

    The Huber objective is strictly convex near the optimum exactly when
    the design restricted to cells with ``|r| < k*sigma`` has full rank.
    """
    I, J = y.shape
    r = (y - mu[:, None] - alpha[None, :]) / sigma
    quad = np.abs(r) < k
    rows = []
    for i in range(I):
        for j in range(J):
            if quad[i, j]:
                x = np.zeros(I + J - 1)
                x[i] = 1.0
                if j < J - 1:
                    x[I + j] = 1.0
                else:
                    x[I:] = -1.0
                rows.append(x)
    if not rows:
        return False
    return np.linalg.matrix_rank(np.array(rows)) == I + J - 1


def median_even(values):
    """Median by explicit sorting; averages the central pair for even n."""
    v = sorted(values)
    n = len(v)
    return v[n // 2] if n % 2 else (v[n // 2 - 1] + v[n // 2]) / 2


def type7_quantile(values, q):
    """Linear interpolation between order statistics, written out by hand."""
    v = sorted(values)
    h = (len(v) - 1) * q
    lo = int(np.floor(h))
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (h - lo) * (v[hi] - v[lo])
