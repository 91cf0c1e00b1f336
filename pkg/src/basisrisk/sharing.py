"""Peer-to-peer sharing of the risk the index leaves behind.

Per-day residuals against the index payout are pooled and redistributed in
proportion to each farm's conditional loss variance. The same split, with
weights rescaled by the monthly loss dispersion, carries the standardized
quantities back to physical units. Metrics summarize how much volatility
each farm sheds by joining the pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .exceptions import (
    EmptyFilterError,
    InsufficientDaysError,
    ZeroVarianceSumError,
)

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class BasisRiskPanel:
    """Residual loss per farm and day after the index payout, plus the
    per-day pool total."""

    eps: np.ndarray
    total: np.ndarray


@dataclass(frozen=True)
class SharingReport:
    """Standardized and physical-unit risks before and after sharing."""

    eps_std: np.ndarray
    delta_std: np.ndarray
    eps_real: np.ndarray
    delta_real: np.ndarray
    total_std: np.ndarray
    total_real: np.ndarray


def basis_risk(x: np.ndarray, m: np.ndarray) -> BasisRiskPanel:
    """Residuals x - m with their per-day pool sum."""
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    if x.shape != m.shape or x.ndim != 2:
        raise ValueError("losses and payouts must be equal-shape (days, farms)")
    eps = x - m
    return BasisRiskPanel(eps=eps, total=eps.sum(axis=1))


def _weights(variances: np.ndarray) -> np.ndarray:
    if np.any(variances <= 0.0) or not np.all(np.isfinite(variances)):
        raise ZeroVarianceSumError(
            "allocation weights need strictly positive finite variances"
        )
    totals = variances.sum(axis=-1, keepdims=True)
    return variances / totals


def allocate(total, variances) -> np.ndarray:
    """Split each day's pool total in proportion to the given variances.

    Accepts a scalar total with a variance vector, or a total vector with
    a (days, farms) variance matrix.
    """
    variances = np.asarray(variances, dtype=float)
    total = np.asarray(total, dtype=float)
    if variances.ndim == 1:
        if total.ndim != 0:
            raise ValueError("scalar total required for a single variance vector")
        return _weights(variances) * total
    if variances.ndim == 2:
        if total.shape != variances.shape[:1]:
            raise ValueError("need one total per day")
        return _weights(variances) * total[:, None]
    raise ValueError("variances must be a vector or a (days, farms) matrix")


def contribution_variance(z, variances, z0: float) -> np.ndarray:
    """Tail mean of sigma_i^4 / sum_j sigma_j^2 over scenario days above z0.

    This is each farm's share of pool variance under the proportional
    split, conditional on the index paying out.
    """
    z = np.asarray(z, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if variances.shape[:1] != z.shape:
        raise ValueError("need one variance row per scenario draw")
    tail = z > z0
    if not np.any(tail):
        raise EmptyFilterError(f"no scenario draws above threshold {z0}")
    v = variances[tail]
    if np.any(v <= 0.0):
        raise ZeroVarianceSumError("conditional variances must stay positive")
    return (v**2 / v.sum(axis=1, keepdims=True)).mean(axis=0)


def realize(eps, sigma2_z, sigma_dp) -> SharingReport:
    """Map standardized risks to physical units and share both versions.

    eps are standardized residuals, sigma2_z the conditional variances
    sigma_i^2(Z_d), and sigma_dp the monthly loss dispersions; all three
    are (days, farms). Physical weights are sigma_i^2(Z_d) * sigma_dp^2.
    """
    eps = np.asarray(eps, dtype=float)
    sigma2_z = np.asarray(sigma2_z, dtype=float)
    sigma_dp = np.asarray(sigma_dp, dtype=float)
    if not (eps.shape == sigma2_z.shape == sigma_dp.shape) or eps.ndim != 2:
        raise ValueError("eps, sigma2_z, sigma_dp must share a (days, farms) shape")
    total_std = eps.sum(axis=1)
    delta_std = allocate(total_std, sigma2_z)
    eps_real = sigma_dp * eps
    total_real = eps_real.sum(axis=1)
    delta_real = allocate(total_real, sigma2_z * sigma_dp**2)
    return SharingReport(
        eps_std=eps,
        delta_std=delta_std,
        eps_real=eps_real,
        delta_real=delta_real,
        total_std=total_std,
        total_real=total_real,
    )


@dataclass(frozen=True)
class PoolMetrics:
    """Volatility-reduction ratios per farm with pool-level summaries."""

    sigma_eps: np.ndarray
    sigma_delta: np.ndarray
    ratios: np.ndarray
    mean_ratio: float
    capacity_weighted_mean: float | None
    ratio_min: float
    ratio_median: float
    ratio_max: float


def metrics(report: SharingReport, capacities=None, physical: bool = True) -> PoolMetrics:
    """Per-farm ratio of after-sharing to before-sharing volatility.

    The pool average is reported unweighted and, when capacities are
    given, capacity-weighted as well.
    """
    eps = report.eps_real if physical else report.eps_std
    delta = report.delta_real if physical else report.delta_std
    if eps.shape[0] < 2:
        raise InsufficientDaysError("volatility ratios need at least two days")
    sigma_eps = eps.std(axis=0, ddof=1)
    sigma_delta = delta.std(axis=0, ddof=1)
    if np.any(sigma_eps == 0.0):
        raise InsufficientDaysError("a farm has zero before-sharing volatility")
    ratios = sigma_delta / sigma_eps
    weighted = None
    if capacities is not None:
        capacities = np.asarray(capacities, dtype=float)
        if capacities.shape != ratios.shape or capacities.sum() <= 0.0:
            raise ValueError("need one positive capacity per farm")
        weighted = float(np.average(ratios, weights=capacities))
    return PoolMetrics(
        sigma_eps=sigma_eps,
        sigma_delta=sigma_delta,
        ratios=ratios,
        mean_ratio=float(ratios.mean()),
        capacity_weighted_mean=weighted,
        ratio_min=float(ratios.min()),
        ratio_median=float(np.median(ratios)),
        ratio_max=float(ratios.max()),
    )


def great_circle_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Haversine distance in kilometres."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(lon2 - lon1)
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return float(2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(a)))


def capacity_distance_diagnostics(ratios, farms, reference_point) -> dict:
    """Relate each farm's volatility ratio to capacity and to distance
    from the reference location.

    Returns row dicts per farm plus Spearman rank correlations; a
    correlation is None when its inputs are constant.
    """
    ratios = np.asarray(ratios, dtype=float)
    if len(farms) != ratios.size:
        raise ValueError("need one ratio per farm")
    rows = []
    for farm, ratio in zip(farms, ratios):
        rows.append(
            {
                "farm_id": farm.farm_id,
                "capacity_mw": farm.pv.capacity_dc_mw,
                "distance_km": great_circle_km(
                    farm.point.lat, farm.point.lon,
                    reference_point.lat, reference_point.lon,
                ),
                "ratio": float(ratio),
            }
        )

    def _rank_corr(values):
        values = np.asarray(values, dtype=float)
        if np.ptp(values) == 0.0 or np.ptp(ratios) == 0.0:
            return None
        return float(spearmanr(values, ratios).statistic)

    return {
        "rows": rows,
        "capacity_rank_corr": _rank_corr([r["capacity_mw"] for r in rows]),
        "distance_rank_corr": _rank_corr([r["distance_km"] for r in rows]),
    }
