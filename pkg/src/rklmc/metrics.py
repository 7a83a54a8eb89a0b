"""Error metrics, log-log slope fits and the exact marginal of the two-mode GMM."""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.stats import norm


def rmse(approx, reference) -> tuple[float, float]:
    """Root-mean-square Euclidean error and its delta-method standard error.

    ``approx`` and ``reference`` have shape ``(M, d)`` (or ``(M,)`` for d = 1).
    The standard error is ``sqrt(Var(|e|^2) / M) / (2 * value)``.
    """
    a = np.asarray(approx, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("need at least one pair")
    diff = a - b
    sq = diff * diff if diff.ndim == 1 else np.sum(diff * diff, axis=-1)
    value = float(np.sqrt(np.mean(sq)))
    if value == 0.0:
        return 0.0, 0.0
    stderr = float(np.sqrt(np.var(sq) / sq.shape[0]) / (2.0 * value))
    return value, stderr


def fit_loglog_slope(xs, ys) -> tuple[float, float, float]:
    """Least-squares line through (log2 x, log2 y): ``(slope, intercept, max_abs_residual)``."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d and of equal length")
    if x.size < 3:
        raise ValueError("need at least three points to fit a slope")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs strictly positive values")
    lx, ly = np.log2(x), np.log2(y)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    return float(slope), float(intercept), float(np.max(np.abs(resid)))


def wasserstein_1d(samples, quantile: Callable) -> float:
    """Sorted-sample estimate of W2 between ``samples`` and the law with quantile function ``quantile``.

    Pairs the i-th order statistic with ``quantile((i - 1/2) / M)``.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if x.size < 2:
        raise ValueError("need at least two samples")
    M = x.size
    q = np.asarray(quantile((np.arange(1, M + 1) - 0.5) / M), dtype=np.float64)
    return float(np.sqrt(np.mean((x - np.broadcast_to(q, x.shape)) ** 2)))


def gmm_marginal_density(t, m: float):
    """Density of one coordinate of the two-mode GMM: (phi(t - m) + phi(t + m)) / 2."""
    t = np.asarray(t, dtype=np.float64)
    return 0.5 * (norm.pdf(t - m) + norm.pdf(t + m))


def gmm_marginal_cdf(t, m: float):
    t = np.asarray(t, dtype=np.float64)
    return 0.5 * (norm.cdf(t - m) + norm.cdf(t + m))


def gmm_marginal_quantile(p, m: float, tol: float = 1e-12, max_iter: int = 200):
    """Invert the marginal CDF by bisection (vectorised over ``p``)."""
    p = np.asarray(p, dtype=np.float64)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    lo = np.full(p.shape, -abs(m) - 40.0)
    hi = np.full(p.shape, abs(m) + 40.0)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = gmm_marginal_cdf(mid, m) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def histogram_density(samples, edges) -> np.ndarray:
    """Empirical density per bin over the samples that fall inside ``edges``."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    counts, _ = np.histogram(x, bins=edges)
    if counts.sum() == 0:
        raise ValueError("no samples inside the histogram range")
    return counts / (counts.sum() * np.diff(edges))
