"""Robust probe-level model fit.

For one probeset with log2 intensities ``y[i, j]`` (chip i, probe j) the
additive model ``y = mu[i] + alpha[j] + error`` is fitted by iteratively
reweighted least squares with Huber weights, a MAD residual scale that is
re-estimated every sweep, and the constraint ``sum(alpha) == 0``.

The kernel works on a stack of equally sized probesets at once so that
:func:`fit_all` stays vectorized; :func:`fit_probeset` is the same kernel on
a stack of one, so both paths give identical numbers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BadInput, ChipQAError, ConvergenceWarning, EmptyInput, ShapeError

__all__ = [
    "HUBER_K",
    "MAD_CONSTANT",
    "PlmConfig",
    "ProbesetFit",
    "PlmResult",
    "huber_weight",
    "huber_rho",
    "huber_objective",
    "mad_scale",
    "fit_probeset",
    "fit_all",
    "irls_sweep",
]

HUBER_K = 1.345
MAD_CONSTANT = 1.4826
# A residual scale this small relative to the data is a perfect fit up to rounding.
_ZERO_SCALE_RTOL = 1e-10


@dataclass(frozen=True)
class PlmConfig:
    huber_k: float = HUBER_K
    tol: float = 1e-8
    max_iter: int = 50

    def __post_init__(self):
        if not self.huber_k > 0:
            raise ChipQAError(f"huber_k must be > 0, got {self.huber_k}")
        if not self.tol > 0:
            raise ChipQAError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ChipQAError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True, eq=False)
class ProbesetFit:
    """Fit artifacts of one probeset.

    ``residuals`` and ``weights`` are chips x probes; ``total_weight`` is the
    per-chip row sum of ``weights``.
    """

    probeset_id: str
    mu: np.ndarray
    alpha: np.ndarray
    residuals: np.ndarray
    weights: np.ndarray
    total_weight: np.ndarray
    sigma: float
    iterations: int
    converged: bool


def huber_weight(u, k=HUBER_K):
    """IRLS weight ``min(1, k/|u|)``; 1 at ``u == 0``."""
    a = np.abs(np.asarray(u, dtype=float))
    # the discarded branch can overflow for subnormal |u|
    with np.errstate(divide="ignore", over="ignore"):
        w = np.where(a <= k, 1.0, k / np.where(a == 0, 1.0, a))
    return w if w.ndim else float(w)


def huber_rho(u, k=HUBER_K):
    a = np.abs(np.asarray(u, dtype=float))
    return np.where(a <= k, 0.5 * a * a, k * a - 0.5 * k * k)


def huber_objective(y, mu, alpha, sigma, k=HUBER_K):
    """Sum of Huber losses of the standardized residuals."""
    r = np.asarray(y) - np.asarray(mu)[:, None] - np.asarray(alpha)[None, :]
    return float(np.sum(huber_rho(r / sigma, k)))


def mad_scale(residuals, axis=None):
    """``1.4826 * median(|r - median(r)|)``.

    With ``axis=None`` the input is flattened and a float is returned.
    """
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise EmptyInput("mad_scale needs at least one residual")
    if axis is None:
        r = r.ravel()
        axis = 0
    med = np.median(r, axis=axis, keepdims=True)
    s = MAD_CONSTANT * np.median(np.abs(r - med), axis=axis)
    return float(s) if np.ndim(s) == 0 else s


def _scales(r):
    return mad_scale(r.reshape(r.shape[0], -1), axis=1)


def _weights(r, s, k, zero):
    s_safe = np.where(zero, 1.0, s)
    w = huber_weight(r / s_safe[:, None, None], k)
    w[zero] = 1.0
    return w


def _update(y, alpha, w):
    """One weighted LS sweep: chips given probes, then probes given chips."""
    W = w.sum(axis=2)
    mu = np.sum(w * (y - alpha[:, None, :]), axis=2) / W
    alpha = np.sum(w * (y - mu[:, :, None]), axis=1) / w.sum(axis=1)
    m = alpha.mean(axis=1)
    return mu + m[:, None], alpha - m[:, None]


def _zero_floor(y):
    return _ZERO_SCALE_RTOL * np.maximum(1.0, np.abs(y).reshape(y.shape[0], -1).max(axis=1))


def irls_sweep(y, mu, alpha, k=HUBER_K):
    """One IRLS sweep from given parameters, for a single probeset.

    Returns the updated ``(mu, alpha)``.  Used to check the fixed point.
    """
    y = np.asarray(y, dtype=float)[None]
    mu = np.asarray(mu, dtype=float)[None]
    alpha = np.asarray(alpha, dtype=float)[None]
    r = y - mu[:, :, None] - alpha[:, None, :]
    s = _scales(r)
    zero = s <= _zero_floor(y)
    if zero[0]:
        return mu[0], alpha[0]
    mu, alpha = _update(y, alpha, _weights(r, s, k, zero))
    return mu[0], alpha[0]


@lru_cache(maxsize=64)
def _design(I, J):
    """Design matrix of the additive model, alpha[J-1] eliminated via the zero sum."""
    X = np.zeros((I * J, I + J - 1))
    rows = np.arange(I * J)
    X[rows, np.repeat(np.arange(I), J)] = 1.0
    cols = np.tile(np.arange(J), I)
    head = cols < J - 1
    X[rows[head], I + cols[head]] = 1.0
    X[rows[~head], I:] = -1.0
    X.setflags(write=False)
    return X


def _wls(y, w):
    """Exact weighted least squares for the additive model with sum(alpha) == 0."""
    I, J = y.shape
    X = _design(I, J)
    wf = w.ravel()
    theta = np.linalg.solve(X.T @ (wf[:, None] * X), X.T @ (wf * y.ravel()))
    alpha = np.r_[theta[I:], -theta[I:].sum()]
    return theta[:I], alpha


def _fixed_scale_fit(y, mu, alpha, sigma, k, tol, max_steps=1000):
    """Huber fit of one (I, J) block at a frozen scale.

    Each step is an exact weighted LS solve with the current Huber weights,
    which is a majorize-minimize step for the convex Huber objective.
    Returns ``(mu, alpha, steps, converged)``.
    """
    for n in range(1, max_steps + 1):
        r = y - mu[:, None] - alpha[None, :]
        mu_new, alpha_new = _wls(y, huber_weight(r / sigma, k))
        change = max(np.abs(mu_new - mu).max(), np.abs(alpha_new - alpha).max())
        mu, alpha = mu_new, alpha_new
        if change < tol:
            return mu, alpha, n, True
    return mu, alpha, max_steps, False


def _settle_scale(y, mu, alpha, k, lo, hi):
    """Solve ``sigma == MAD(residuals of the Huber fit at sigma)`` for one block.

    The plain loop can fall into a 2-cycle when the MAD switches between
    order statistics; this root-find lands on the fixed point the loop is
    circling.  Returns ``(mu, alpha, steps, converged)``.
    """
    from scipy.optimize import brentq

    steps = [0]
    inner_tol = 1e-12 * max(1.0, float(np.abs(y).max()))
    warm = [mu, alpha]

    def solve(sigma):
        m, a, n, ok = _fixed_scale_fit(y, warm[0], warm[1], sigma, k, inner_tol)
        warm[:] = m, a
        steps[0] += n
        return m, a, ok

    def gap(sigma):
        m, a, _ = solve(sigma)
        return mad_scale(y - m[:, None] - a[None, :]) - sigma

    g_lo = gap(lo)
    for _ in range(30):
        if g_lo > 0:
            break
        lo *= 0.5
        g_lo = gap(lo)
    g_hi = gap(hi)
    for _ in range(30):
        if g_hi < 0:
            break
        hi *= 2.0
        g_hi = gap(hi)
    if not (g_lo > 0 > g_hi):
        return mu, alpha, steps[0], False
    try:
        root = brentq(gap, lo, hi, xtol=1e-13, maxiter=200)
    except (ValueError, RuntimeError):
        return mu, alpha, steps[0], False
    m, a, ok = solve(root)
    return m, a, steps[0], ok


def _irls(y, k, tol, max_iter):
    """Fit a stack ``y`` of shape (probesets, chips, probes)."""
    P = y.shape[0]
    floor = _zero_floor(y)

    mu = np.median(y, axis=2)
    alpha = np.median(y - mu[:, :, None], axis=1)
    m = alpha.mean(axis=1)
    alpha -= m[:, None]
    mu += m[:, None]

    iters = np.zeros(P, dtype=np.int64)
    converged = np.zeros(P, dtype=bool)
    calm = np.zeros(P, dtype=bool)  # previous sweep already moved less than tol
    s_lo = np.full(P, np.inf)
    s_hi = np.zeros(P)
    active = np.arange(P)
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        ya, ma, aa = y[active], mu[active], alpha[active]
        r = ya - ma[:, :, None] - aa[:, None, :]
        s = _scales(r)
        zero = s <= floor[active]
        if it > max_iter // 2:
            s_lo[active] = np.minimum(s_lo[active], s)
            s_hi[active] = np.maximum(s_hi[active], s)
        w = _weights(r, s, k, zero)
        mu_new, alpha_new = _update(ya, aa, w)
        mu_new[zero] = ma[zero]
        alpha_new[zero] = aa[zero]
        change = np.maximum(
            np.abs(mu_new - ma).max(axis=1), np.abs(alpha_new - aa).max(axis=1)
        )
        mu[active] = mu_new
        alpha[active] = alpha_new
        iters[active] = it
        small = change < tol
        # one small step can sit on an unstable point; ask for two in a row
        done = zero | (small & calm[active])
        calm[active] = small
        converged[active[done]] = True
        active = active[~done]

    for p in active:
        lo = s_lo[p] if np.isfinite(s_lo[p]) else s_hi[p]
        mu[p], alpha[p], n, ok = _settle_scale(y[p], mu[p], alpha[p], k, 0.9 * lo, 1.1 * s_hi[p])
        iters[p] += n
        converged[p] = ok

    r = y - mu[:, :, None] - alpha[:, None, :]
    s = _scales(r)
    zero = s <= floor
    w = _weights(r, s, k, zero)
    s = np.where(zero, 0.0, s)
    return mu, alpha, r, w, s, iters, converged


def _check_block(y):
    if y.ndim != 2:
        raise ShapeError(f"expected a chips x probes matrix, got shape {y.shape}")
    if y.shape[0] < 2 or y.shape[1] < 2:
        raise ShapeError(f"need at least 2 chips and 2 probes, got {y.shape[0]}x{y.shape[1]}")
    if not np.all(np.isfinite(y)):
        raise BadInput("log2 intensities must be finite")


def _make_fit(ps, mu, alpha, r, w, s, it, conv):
    for a in (mu, alpha, r, w):
        a.setflags(write=False)
    W = w.sum(axis=1)
    W.setflags(write=False)
    return ProbesetFit(ps, mu, alpha, r, w, W, float(s), int(it), bool(conv))


def fit_probeset(y, k=HUBER_K, tol=1e-8, max_iter=50, probeset_id="") -> ProbesetFit:
    """Robustly fit one chips x probes block of log2 intensities.

    Non-convergence is reported through ``converged=False`` and a
    :class:`ConvergenceWarning`, not an exception.
    """
    y = np.asarray(y, dtype=float)
    _check_block(y)
    PlmConfig(k, tol, max_iter)
    out = _irls(y[None].copy(), k, tol, max_iter)
    fit = _make_fit(probeset_id, *(a[0].copy() for a in out[:4]), out[4][0], out[5][0], out[6][0])
    if not fit.converged:
        warnings.warn(
            f"IRLS for probeset {probeset_id!r} did not converge in {max_iter} iterations",
            ConvergenceWarning,
            stacklevel=2,
        )
    return fit


@dataclass(frozen=True, eq=False)
class PlmResult:
    fits: dict
    chip_names: tuple
    layout: object

    @property
    def probeset_ids(self):
        return tuple(self.fits)

    def mu_matrix(self):
        """Expressions, probesets x chips."""
        return np.vstack([f.mu for f in self.fits.values()])

    def sigmas(self):
        return np.array([f.sigma for f in self.fits.values()])

    def total_weight_matrix(self):
        return np.vstack([f.total_weight for f in self.fits.values()])

    def _scatter(self, attr):
        out = np.empty((len(self.chip_names), self.layout.n_probes))
        for ps, f in self.fits.items():
            out[:, self.layout.slices[ps]] = getattr(f, attr)
        return out

    def residual_matrix(self):
        """Residuals, chips x probes in layout order."""
        return self._scatter("residuals")

    def weight_matrix(self):
        """Weights, chips x probes in layout order."""
        return self._scatter("weights")

    def n_unconverged(self):
        return sum(not f.converged for f in self.fits.values())


def fit_all(norm, layout, config: PlmConfig = PlmConfig()) -> PlmResult:
    """Fit every probeset of ``layout`` to the normalized matrix ``norm``.

    Probesets with the same probe count are fitted together as one stack.
    The result is ordered by layout probeset order and does not depend on
    how probesets are grouped.
    """
    values = np.asarray(norm.values, dtype=float)
    if values.shape[1] != layout.n_probes:
        raise ShapeError(f"{values.shape[1]} columns for {layout.n_probes} layout probes")
    if values.shape[0] < 2:
        raise ShapeError(f"need at least 2 chips, got {values.shape[0]}")
    if not np.all(np.isfinite(values)):
        raise BadInput("log2 intensities must be finite")

    by_size = {}
    for ps, sl in layout.slices.items():
        by_size.setdefault(sl.stop - sl.start, []).append(ps)

    fits = {}
    for size, group in by_size.items():
        cols = np.array([np.arange(layout.slices[ps].start, layout.slices[ps].stop) for ps in group])
        stack = np.ascontiguousarray(values[:, cols].transpose(1, 0, 2))
        mu, alpha, r, w, s, it, conv = _irls(stack, config.huber_k, config.tol, config.max_iter)
        for g, ps in enumerate(group):
            fits[ps] = _make_fit(
                ps, mu[g].copy(), alpha[g].copy(), r[g].copy(), w[g].copy(), s[g], it[g], conv[g]
            )

    result = PlmResult({ps: fits[ps] for ps in layout.probesets}, tuple(norm.chip_names), layout)
    bad = result.n_unconverged()
    if bad:
        warnings.warn(
            f"IRLS did not converge in {config.max_iter} iterations for {bad} probeset(s)",
            ConvergenceWarning,
            stacklevel=2,
        )
    return result
