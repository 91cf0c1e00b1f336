"""Gaussian-kernel density and regression estimators in one dimension.

Everything downstream that conditions on the index score funnels through
here: density estimates with first and second derivatives, Nadaraya-Watson
conditional means with exact ratio-rule derivatives, and conditional
covariances assembled from those means. Payloads evaluate in batches so a
single sweep over the samples serves many regressands at once.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import (
    DegenerateSampleError,
    EmptyNeighborhoodError,
    NearZeroDensityError,
)

GAUSS_NORM = 1.0 / math.sqrt(2.0 * math.pi)

# Beyond 8 bandwidths a Gaussian kernel weight is below 6e-15, so dropping
# those samples perturbs estimates well under the 1e-10 contract.
TRUNCATION_RADIUS = 8.0

# Cap on query-by-sample scratch entries per evaluation block (~64 MB).
_BLOCK_ENTRIES = 2**23


def silverman_bandwidth(z: np.ndarray) -> float:
    """Rule-of-thumb bandwidth 1.06 * sigma * L**(-1/5)."""
    z = np.asarray(z, dtype=float)
    if z.ndim != 1 or z.size < 2:
        raise DegenerateSampleError("bandwidth needs a 1-d sample with L >= 2")
    sigma = float(np.std(z, ddof=1))
    if not np.isfinite(sigma) or sigma <= 0.0:
        raise DegenerateSampleError("sample dispersion is zero; bandwidth undefined")
    return 1.06 * sigma * z.size ** (-0.2)


class KernelModel:
    """Immutable sample set for Gaussian-kernel estimation.

    Samples are sorted at construction; payloads passed to the evaluators
    stay in the caller's original order and are realigned internally.
    With ``truncate`` enabled, evaluation restricts to samples within
    TRUNCATION_RADIUS bandwidths of the query range.
    """

    def __init__(self, z, h: float | None = None, truncate: bool = False):
        z = np.asarray(z, dtype=float)
        if z.ndim != 1 or z.size == 0:
            raise DegenerateSampleError("samples must form a non-empty 1-d array")
        if not np.all(np.isfinite(z)):
            raise DegenerateSampleError("samples must be finite")
        if h is None:
            h = silverman_bandwidth(z)
        h = float(h)
        if not np.isfinite(h) or h <= 0.0:
            raise ValueError(f"bandwidth must be positive, got {h}")
        self._order = np.argsort(z, kind="stable")
        self._z = z[self._order]
        self.h = h
        self.truncate = bool(truncate)
        self.n_samples = int(z.size)

    def _active(self, z_eval: np.ndarray) -> slice:
        if not self.truncate:
            return slice(0, self.n_samples)
        radius = TRUNCATION_RADIUS * self.h
        lo = int(np.searchsorted(self._z, z_eval.min() - radius, side="left"))
        hi = int(np.searchsorted(self._z, z_eval.max() + radius, side="right"))
        return slice(lo, hi)


class KernelSums:
    """Raw kernel sums over the active window at each query point.

    k0/k1/k2 hold sum K, sum K', sum K'' (shape n_query); p0/p1/p2 hold the
    payload-weighted analogues (shape n_query x n_payloads) or None.
    """

    __slots__ = ("k0", "k1", "k2", "p0", "p1", "p2")

    def __init__(self, k0, k1, k2, p0, p1, p2):
        self.k0 = k0
        self.k1 = k1
        self.k2 = k2
        self.p0 = p0
        self.p1 = p1
        self.p2 = p2


def _check_queries(z_eval) -> np.ndarray:
    z_eval = np.atleast_1d(np.asarray(z_eval, dtype=float))
    if z_eval.ndim != 1:
        raise ValueError("query points must form a 1-d array")
    if not np.all(np.isfinite(z_eval)):
        raise ValueError("query points must be finite")
    return z_eval


def kernel_sums(model: KernelModel, z_eval, payloads=None) -> KernelSums:
    """Accumulate Gaussian kernel sums (orders 0..2) at each query point."""
    z_eval = _check_queries(z_eval)
    window = model._active(z_eval)
    zs = model._z[window]
    if zs.size == 0:
        raise EmptyNeighborhoodError(
            f"no samples within {TRUNCATION_RADIUS} bandwidths of queries"
        )
    pw = None
    if payloads is not None:
        pw = np.asarray(payloads, dtype=float)
        if pw.ndim == 1:
            pw = pw[:, None]
        if pw.shape[0] != model.n_samples:
            raise ValueError("payload rows must match the sample count")
        pw = pw[model._order][window]

    nq = z_eval.size
    k0 = np.empty(nq)
    k1 = np.empty(nq)
    k2 = np.empty(nq)
    p0 = p1 = p2 = None
    if pw is not None:
        p0 = np.empty((nq, pw.shape[1]))
        p1 = np.empty((nq, pw.shape[1]))
        p2 = np.empty((nq, pw.shape[1]))

    step = max(1, _BLOCK_ENTRIES // zs.size)
    for start in range(0, nq, step):
        rows = slice(start, min(start + step, nq))
        u = (z_eval[rows, None] - zs[None, :]) / model.h
        k = GAUSS_NORM * np.exp(-0.5 * u * u)
        ku = -u * k
        kuu = (u * u - 1.0) * k
        k0[rows] = k.sum(axis=1)
        k1[rows] = ku.sum(axis=1)
        k2[rows] = kuu.sum(axis=1)
        if pw is not None:
            p0[rows] = k @ pw
            p1[rows] = ku @ pw
            p2[rows] = kuu @ pw
    return KernelSums(k0, k1, k2, p0, p1, p2)


class DensityEval:
    """Density estimate with derivatives; log-derivatives guard against
    underflowed density."""

    __slots__ = ("f", "df", "d2f")

    def __init__(self, f, df, d2f):
        self.f = f
        self.df = df
        self.d2f = d2f

    def _guard(self) -> None:
        if np.any(self.f < 1e-300):
            raise NearZeroDensityError(
                "density below 1e-300 at a query point; log-derivatives undefined"
            )

    def dlogf(self) -> np.ndarray:
        self._guard()
        return self.df / self.f

    def d2logf(self) -> np.ndarray:
        self._guard()
        return (self.d2f * self.f - self.df**2) / self.f**2


def kde(model: KernelModel, z_eval) -> DensityEval:
    """Density, slope, and curvature of the kernel density estimate."""
    sums = kernel_sums(model, z_eval)
    lh = model.n_samples * model.h
    return DensityEval(sums.k0 / lh, sums.k1 / (lh * model.h), sums.k2 / (lh * model.h**2))


def _ratio_derivs(a0, a1, a2, b0, b1, b2, h):
    """Quotient-rule derivatives of (sum x K)/(sum K) in the query variable."""
    g = a0 / b0
    dg = (a1 * b0 - a0 * b1) / (h * b0**2)
    d2g = (a2 * b0 - a0 * b2) / (h**2 * b0**2) - 2.0 * b1 * (a1 * b0 - a0 * b1) / (
        h**2 * b0**3
    )
    return g, dg, d2g


def _check_neighborhoods(model: KernelModel, z_eval: np.ndarray) -> None:
    """Reject queries with no sample inside the truncation radius.

    Such a query can still carry positive kernel mass from samples kept for
    the rest of the grid, but that mass underflows when the ratio rule
    squares and cubes it, so the regression triple would be NaN noise.
    """
    pos = np.searchsorted(model._z, z_eval)
    below = model._z[np.clip(pos - 1, 0, model.n_samples - 1)]
    above = model._z[np.clip(pos, 0, model.n_samples - 1)]
    gap = np.minimum(np.abs(z_eval - below), np.abs(above - z_eval))
    if np.any(gap > TRUNCATION_RADIUS * model.h):
        raise EmptyNeighborhoodError(
            f"a query point has no sample within {TRUNCATION_RADIUS} bandwidths"
        )


def nw_regress(model: KernelModel, z_eval, x):
    """Nadaraya-Watson conditional mean of x given the sample variable.

    Returns (g, g', g'') arrays over the query points. x may be a single
    payload (1-d) or a column batch (L x m); output shapes follow.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    z_eval = _check_queries(z_eval)
    _check_neighborhoods(model, z_eval)
    sums = kernel_sums(model, z_eval, payloads=x)
    if np.any(sums.k0 <= 0.0):
        raise EmptyNeighborhoodError(
            "kernel mass underflowed to zero at a query point"
        )
    b0 = sums.k0[:, None]
    b1 = sums.k1[:, None]
    b2 = sums.k2[:, None]
    g, dg, d2g = _ratio_derivs(sums.p0, sums.p1, sums.p2, b0, b1, b2, model.h)
    if single:
        return g[:, 0], dg[:, 0], d2g[:, 0]
    return g, dg, d2g


def nw_and_density(model: KernelModel, z_eval, x):
    """Density triple and regression triple from one sweep over the samples.

    Equivalent to ``(kde(model, z_eval), nw_regress(model, z_eval, x))`` but
    accumulates the kernel sums once, which matters inside optimizer loops
    where the same query grid serves both the density and many payloads.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    z_eval = _check_queries(z_eval)
    _check_neighborhoods(model, z_eval)
    sums = kernel_sums(model, z_eval, payloads=x)
    lh = model.n_samples * model.h
    dens = DensityEval(
        sums.k0 / lh, sums.k1 / (lh * model.h), sums.k2 / (lh * model.h**2)
    )
    if np.any(sums.k0 <= 0.0):
        raise EmptyNeighborhoodError(
            "kernel mass underflowed to zero at a query point"
        )
    b0 = sums.k0[:, None]
    b1 = sums.k1[:, None]
    b2 = sums.k2[:, None]
    g, dg, d2g = _ratio_derivs(sums.p0, sums.p1, sums.p2, b0, b1, b2, model.h)
    if single:
        return dens, (g[:, 0], dg[:, 0], d2g[:, 0])
    return dens, (g, dg, d2g)


def cond_cov(model: KernelModel, z_eval, u, v) -> np.ndarray:
    """Conditional covariance Cov[u, v | z] = E[uv|z] - E[u|z] E[v|z]."""
    c, _, _ = cond_cov_derivs(model, z_eval, u, v)
    return c


def cond_cov_derivs(model: KernelModel, z_eval, u, v):
    """Conditional covariance of u and v with its first two derivatives."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError("u and v must be 1-d payloads of equal length")
    g, dg, d2g = nw_regress(model, z_eval, np.column_stack([u, v, u * v]))
    gu, gv, guv = g.T
    dgu, dgv, dguv = dg.T
    d2gu, d2gv, d2guv = d2g.T
    c = guv - gu * gv
    dc = dguv - dgu * gv - gu * dgv
    d2c = d2guv - d2gu * gv - 2.0 * dgu * dgv - gu * d2gv
    return c, dc, d2c
