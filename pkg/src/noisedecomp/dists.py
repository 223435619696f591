"""Scalar distributions: Gaussians, Gaussian mixtures, kernel-density
empirical estimates, quantile grids, and the quantile-based Wasserstein metric.

Mixtures are the decomposition's output language: a mixture density is the
weighted sum of Gaussian component densities, and distances between reward
laws are measured through their quantile functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import backend
from .errors import DataError, DegenerateDataError, DomainError

_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


def _bisect_quantile(cdf, taus, lo, hi, tol=1e-8, max_iter=200):
    """Vectorized bisection: find z with cdf(z) = tau, bracket width below tol."""
    taus = np.asarray(taus, dtype=np.float64)
    lo = np.full(taus.shape, lo, dtype=np.float64)
    hi = np.full(taus.shape, hi, dtype=np.float64)
    # widen brackets until they straddle every requested level
    for _ in range(60):
        bad = cdf(lo) > taus
        if not np.any(bad):
            break
        lo[bad] -= 2.0 * (hi[bad] - lo[bad])
    for _ in range(60):
        bad = cdf(hi) < taus
        if not np.any(bad):
            break
        hi[bad] += 2.0 * (hi[bad] - lo[bad])
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < taus
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Gaussian:
    """Normal law parameterized by mean and variance."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.variance)):
            raise DomainError("Gaussian parameters must be finite")
        if self.variance <= 0:
            raise DomainError(f"variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def pdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        return np.exp(-0.5 * z * z) / (self.std * _SQRT_2PI)

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=np.float64) - self.mean) / self.std)

    def quantile(self, tau):
        _check_tau(tau)
        return self.mean + self.std * ndtri(tau)

    def sample(self, rng, n=None):
        return rng.normal(self.mean, self.std, size=n)


def _check_tau(tau):
    arr = np.asarray(tau, dtype=np.float64)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError(f"quantile level must lie strictly inside (0,1), got {tau}")


class GMM:
    """Finite Gaussian mixture; weights nonnegative summing to one."""

    def __init__(self, components, weights):
        components = tuple(components)
        if not components:
            raise DataError("mixture needs at least one component")
        for c in components:
            if not isinstance(c, Gaussian):
                raise TypeError("components must be Gaussian instances")
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(components),):
            raise DataError("one weight per component required")
        if np.any(w < 0):
            raise DomainError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"weights must sum to 1 within 1e-9, got {w.sum()!r}")
        self.components = components
        self.weights = w
        self._means = np.array([c.mean for c in components])
        self._vars = np.array([c.variance for c in components])
        self._stds = np.sqrt(self._vars)

    @property
    def n_components(self) -> int:
        return len(self.components)

    def pdf(self, x):
        return backend.gaussian_mixture_pdf(x, self._means, self._vars, self.weights)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        z = (x[..., None] - self._means) / self._stds
        return ndtr(z) @ self.weights

    def mean(self) -> float:
        return float(self.weights @ self._means)

    def variance(self) -> float:
        second = self.weights @ (self._vars + self._means**2)
        return float(second - self.mean() ** 2)

    def quantile(self, tau):
        _check_tau(tau)
        arr = np.atleast_1d(np.asarray(tau, dtype=np.float64))
        lo = float(np.min(self._means - 12.0 * self._stds))
        hi = float(np.max(self._means + 12.0 * self._stds))
        out = _bisect_quantile(self.cdf, arr, lo, hi)
        return float(out[0]) if np.ndim(tau) == 0 else out

    def sample(self, rng, n):
        if n < 1:
            raise DataError("need n >= 1 samples")
        idx = rng.choice(self.n_components, size=n, p=self.weights)
        draws = rng.standard_normal(n)
        return self._means[idx] + self._stds[idx] * draws


class EmpiricalDistribution:
    """Gaussian-kernel density estimate over observed samples.

    Support is [min - 3h, max + 3h] with h the Silverman bandwidth; the raw
    samples are kept (sorted) so the exact mixture CDF can be evaluated.
    """

    def __init__(self, samples, bandwidth):
        arr = np.sort(np.asarray(samples, dtype=np.float64))
        if arr.size < 2:
            raise DataError(f"need at least 2 samples, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise DataError("samples must be finite")
        if bandwidth <= 0:
            raise DegenerateDataError("bandwidth must be positive (degenerate sample spread)")
        self.samples = arr
        self.bandwidth = float(bandwidth)
        self.r_min = float(arr[0] - 3.0 * self.bandwidth)
        self.r_max = float(arr[-1] + 3.0 * self.bandwidth)

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    def pdf(self, x):
        return backend.kde_pdf(x, self.samples, self.bandwidth)

    def cdf(self, x):
        return backend.kde_cdf(x, self.samples, self.bandwidth)

    def quantile(self, tau):
        _check_tau(tau)
        arr = np.atleast_1d(np.asarray(tau, dtype=np.float64))
        out = _bisect_quantile(self.cdf, arr, self.r_min, self.r_max)
        return float(out[0]) if np.ndim(tau) == 0 else out

    def grid(self, n: int = 1024):
        """Midpoint grid over the support and the density evaluated on it."""
        cell = (self.r_max - self.r_min) / n
        xs = self.r_min + (np.arange(n) + 0.5) * cell
        return xs, self.pdf(xs)

    def mean(self) -> float:
        return float(self.samples.mean())


class QuantileGrid:
    """A discrete quantile function: strictly increasing levels in (0,1) with
    nondecreasing values."""

    def __init__(self, levels, values):
        lv = np.asarray(levels, dtype=np.float64)
        vals = np.asarray(values, dtype=np.float64)
        if lv.ndim != 1 or lv.shape != vals.shape or lv.size == 0:
            raise DataError("levels and values must be matching nonempty vectors")
        if np.any(lv <= 0.0) or np.any(lv >= 1.0):
            raise DomainError("levels must lie strictly inside (0,1)")
        if np.any(np.diff(lv) <= 0.0):
            raise DomainError("levels must be strictly increasing")
        if np.any(np.diff(vals) < -1e-12):
            raise DomainError("values must be nondecreasing")
        self.levels = lv
        self.values = vals

    def quantile(self, tau):
        _check_tau(tau)
        return np.interp(np.asarray(tau, dtype=np.float64), self.levels, self.values)


def gaussian_pdf(g: Gaussian, x):
    return g.pdf(x)


def gmm_pdf(m: GMM, x):
    return m.pdf(x)


def gmm_sample(m: GMM, rng, n: int):
    return m.sample(rng, n)


def quantile_function(dist, tau):
    """Quantile (inverse CDF) of a mixture or empirical distribution."""
    _check_tau(tau)
    return dist.quantile(tau)


WASSERSTEIN_GRID = 1024


def _grid_quantiles(dist, levels):
    if hasattr(dist, "quantile"):
        return np.asarray(dist.quantile(levels), dtype=np.float64)
    arr = np.asarray(dist, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError("sample-based distribution must be a nonempty 1-d array")
    return np.quantile(arr, levels)


def wasserstein(f, g, p: float = 1.0) -> float:
    """p-Wasserstein distance via quantile differences on a fixed midpoint grid.

    Accepts anything with a ``quantile`` method, or a raw 1-d sample array
    (order-statistic quantiles).
    """
    if p < 1:
        raise DomainError(f"norm order must be >= 1, got {p}")
    u = (np.arange(WASSERSTEIN_GRID) + 0.5) / WASSERSTEIN_GRID
    qf = _grid_quantiles(f, u)
    qg = _grid_quantiles(g, u)
    diff = np.abs(qf - qg)
    if p == 1.0:
        return float(diff.mean())
    return float((diff**p).mean() ** (1.0 / p))


def silverman_bandwidth(samples) -> float:
    arr = np.asarray(samples, dtype=np.float64)
    spread = arr.std(ddof=1)
    q75, q25 = np.percentile(arr, [75.0, 25.0])
    iqr = (q75 - q25) / 1.34
    candidates = [c for c in (spread, iqr) if c > 0]
    if not candidates:
        return 0.0
    return float(0.9 * min(candidates) * arr.size ** (-0.2))


def fit_empirical(samples) -> EmpiricalDistribution:
    """Kernel-density estimate with Silverman's bandwidth."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size < 2:
        raise DataError(f"need at least 2 samples, got {arr.size}")
    h = silverman_bandwidth(arr)
    if h == 0.0:
        raise DegenerateDataError("all samples identical; no density estimate possible")
    return EmpiricalDistribution(arr, h)
