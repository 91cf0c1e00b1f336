"""Daily production-loss panels.

Hourly forecast and observed weather runs are pushed through the same
PV chain; their difference is the hourly production error. Errors are
aggregated per day over the location's daylight window, valued in EUR
under the plant's support scheme, and standardized within each
(month, year) group so that the seasonal and meteorological
non-stationarity drops out of the modeling variables.

Delta convention throughout: forecast minus observed, so a positive
delta is a production shortfall.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .exceptions import (
    DegenerateGroupError,
    MissingHoursError,
    MissingPriceError,
    MissingStatsError,
    PolarEdgeError,
)
from .solar import (
    GeoPoint,
    PanelGeometry,
    PvParams,
    cell_temperature,
    erbs_split,
    poa_irradiance,
    pv_power,
    solar_position,
    sunrise_sunset,
)

log = logging.getLogger(__name__)

SCHEMES = ("market", "partial", "feedin")

SIGMA_FLOOR = 1e-12


@dataclass(frozen=True)
class FarmSpec:
    """One plant: location, mount, electrical parameters, compensation."""

    farm_id: str
    point: GeoPoint
    panel: PanelGeometry
    pv: PvParams
    scheme: str
    tariff_eur_mwh: float = 0.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme {self.scheme!r} not one of {SCHEMES}")
        if self.scheme in ("partial", "feedin") and self.tariff_eur_mwh <= 0.0:
            raise ValueError(f"{self.scheme!r} scheme needs a positive tariff")


def hourly_power(times, ghi, dni, t_air, point: GeoPoint, panel: PanelGeometry,
                 pv: PvParams) -> np.ndarray:
    """AC power (MW) for hour-start timestamps; sun evaluated at the
    hour midpoint, matching the daylight-window convention.

    ``dni`` entries may be NaN, in which case the Erbs split of ``ghi``
    is used; otherwise the diffuse part is recovered from closure and
    floored at zero.
    """
    times = np.asarray(times, dtype="datetime64[s]") + np.timedelta64(30, "m")
    pos = solar_position(times, point)
    ghi = np.asarray(ghi, dtype=float)
    dni = np.asarray(dni, dtype=float)
    t_air = np.asarray(t_air, dtype=float)

    dni_erbs, dhi_erbs = erbs_split(ghi, pos.zenith_deg, pos.e0_normal)
    cosz = np.cos(np.radians(pos.zenith_deg))
    up = (pos.zenith_deg < 90.0) & (ghi > 0.0)
    have_dni = np.isfinite(dni) & up
    dni_eff = np.where(have_dni, dni, dni_erbs)
    dhi_eff = np.where(have_dni, np.clip(ghi - dni * cosz, 0.0, None), dhi_erbs)
    dni_eff = np.where(up, dni_eff, 0.0)
    dhi_eff = np.where(up, dhi_eff, 0.0)

    poa = poa_irradiance(dni_eff, dhi_eff, np.where(up, ghi, 0.0), pos.zenith_deg,
                         pos.azimuth_deg, panel)
    t_cell = cell_temperature(t_air, poa, pv.noct_c)
    return pv_power(poa, t_cell, pv)


def hourly_production_delta(wx: pd.DataFrame, farm: FarmSpec) -> pd.DataFrame:
    """Per-hour production error for one farm.

    ``wx`` must be indexed by hour-start UTC timestamps and carry the
    columns ssrd_fc, ssrd_obs, dni_fc, dni_obs, t2m_fc, t2m_obs. Hourly
    energies equal the mean powers (1 h steps), so dP is in MWh.
    """
    times = wx.index.values
    p_fc = hourly_power(times, wx["ssrd_fc"].values, wx["dni_fc"].values,
                        wx["t2m_fc"].values, farm.point, farm.panel, farm.pv)
    p_obs = hourly_power(times, wx["ssrd_obs"].values, wx["dni_obs"].values,
                         wx["t2m_obs"].values, farm.point, farm.panel, farm.pv)
    return pd.DataFrame({"dP_mwh": p_fc - p_obs, "p_fc_mwh": p_fc, "p_obs_mwh": p_obs},
                        index=wx.index)


def _daylight_window(date, point: GeoPoint) -> np.ndarray:
    h_sr, h_ss = sunrise_sunset(date, point)
    day = np.datetime64(date, "s")
    return day + np.arange(h_sr, h_ss + 1) * np.timedelta64(1, "h")


def hourly_value(dp_mwh: pd.Series, prices: pd.Series | None, scheme: str,
                 tariff: float) -> pd.Series:
    """EUR value of hourly production errors under a support scheme.

    market: day-ahead price; partial: the better of price and tariff,
    hour by hour; feedin: tariff only (prices not needed).
    """
    if scheme == "feedin":
        return dp_mwh * tariff
    if prices is None:
        raise MissingPriceError(f"{scheme!r} scheme requires hourly prices")
    p = prices.reindex(dp_mwh.index)
    if p.isna().any():
        missing = p.index[p.isna()][:3].tolist()
        raise MissingPriceError(f"no price for hours {missing} (scheme {scheme!r})")
    if scheme == "partial":
        p = np.maximum(p, tariff)
    return dp_mwh * p


def daily_farm_losses(wx: pd.DataFrame, farm: FarmSpec,
                      prices: pd.Series | None = None) -> pd.DataFrame:
    """Daily production shortfall and its EUR value for one farm.

    Aggregates hourly dP over the farm's daylight window [h_sr, h_ss];
    every window hour must be present. Dates with no daylight window
    (polar edge) are skipped.

    Returns a frame indexed by date with columns dP_mwh, loss_eur.
    """
    hourly = hourly_production_delta(wx, farm)
    value = hourly_value(hourly["dP_mwh"], prices, farm.scheme, farm.tariff_eur_mwh)

    rows = {}
    for date in np.unique(wx.index.values.astype("datetime64[D]")):
        try:
            window = _daylight_window(date, farm.point)
        except PolarEdgeError:
            continue
        idx = pd.DatetimeIndex(window)
        missing = idx.difference(hourly.index)
        if len(missing):
            raise MissingHoursError(
                f"farm {farm.farm_id} date {date}: missing hours {missing[:3].tolist()}"
            )
        rows[pd.Timestamp(date)] = (
            float(hourly.loc[idx, "dP_mwh"].sum()),
            float(value.loc[idx].sum()),
        )
    out = pd.DataFrame.from_dict(rows, orient="index", columns=["dP_mwh", "loss_eur"])
    out.index.name = "date"
    return out.sort_index()


def daily_reference_deltas(wx: pd.DataFrame, point: GeoPoint) -> pd.DataFrame:
    """Daily forecast-error covariates at the reference station.

    dSSRD and dDNI are sums of the hourly forecast-minus-observed
    irradiance errors over the reference daylight window; dT is the
    window average with divisor (h_ss - h_sr + 1). dT is carried for
    reporting but not used as a model covariate.
    """
    d_ssrd = wx["ssrd_fc"] - wx["ssrd_obs"]
    d_dni = wx["dni_fc"] - wx["dni_obs"]
    d_t = wx["t2m_fc"] - wx["t2m_obs"]

    rows = {}
    for date in np.unique(wx.index.values.astype("datetime64[D]")):
        try:
            window = _daylight_window(date, point)
        except PolarEdgeError:
            continue
        idx = pd.DatetimeIndex(window)
        missing = idx.difference(wx.index)
        if len(missing):
            raise MissingHoursError(
                f"reference date {date}: missing hours {missing[:3].tolist()}"
            )
        n_hours = len(idx)
        rows[pd.Timestamp(date)] = (
            float(d_ssrd.loc[idx].sum()),
            float(d_dni.loc[idx].sum()),
            float(d_t.loc[idx].sum()) / n_hours,
        )
    out = pd.DataFrame.from_dict(rows, orient="index", columns=["dSSRD", "dDNI", "dT"])
    out.index.name = "date"
    return out.sort_index()


# -- monthly stationarization -------------------------------------------------

def month_key(index: pd.DatetimeIndex) -> pd.MultiIndex:
    return pd.MultiIndex.from_arrays([index.year, index.month], names=["year", "month"])


def monthly_stats(daily: pd.DataFrame, cols: list[str], min_days: int = 2) -> pd.DataFrame:
    """Per-(year, month) mean and sample standard deviation (N-1).

    Groups with fewer than ``min_days`` rows or with a column dispersion
    at the degeneracy floor are dropped from that column's statistics
    and logged; standardization later skips the affected rows.
    """
    idx = pd.DatetimeIndex(daily.index)
    grouped = daily[cols].groupby([idx.year.rename("year"), idx.month.rename("month")])
    mu = grouped.mean()
    sigma = grouped.std(ddof=1)
    n = grouped.size()

    for col in cols:
        bad = (n < min_days) | (sigma[col] <= SIGMA_FLOOR) | sigma[col].isna()
        if bad.any():
            for ym in sigma.index[bad]:
                log.warning("degenerate (year, month)=%s for %s: dropped", ym, col)
            mu.loc[bad, col] = np.nan
            sigma.loc[bad, col] = np.nan

    out = pd.concat({"mu": mu, "sigma": sigma}, axis=1)
    out.columns = [f"{col}_{stat}" for stat, col in out.columns]
    out.index.names = ["year", "month"]
    return out


def standardize(daily: pd.DataFrame, stats: pd.DataFrame, cols: list[str],
                suffix: str = "_std") -> pd.DataFrame:
    """Center and scale columns by their (year, month) statistics.

    Rows whose group statistics are unavailable (degenerate or missing
    months) come back with NaN in the standardized columns; callers drop
    and count them.
    """
    key = month_key(pd.DatetimeIndex(daily.index))
    out = daily.copy()
    for col in cols:
        mu = stats[f"{col}_mu"].reindex(key).to_numpy()
        sigma = stats[f"{col}_sigma"].reindex(key).to_numpy()
        out[col + suffix] = (daily[col].to_numpy() - mu) / sigma
    return out


def group_sigma(stats: pd.DataFrame, when: pd.Timestamp, col: str) -> float:
    """The (year, month) standard deviation used to rescale standardized
    quantities back to physical units."""
    try:
        val = float(stats.loc[(when.year, when.month), f"{col}_sigma"])
    except KeyError:
        raise MissingStatsError(f"no stats for ({when.year}, {when.month})") from None
    if not np.isfinite(val):
        raise MissingStatsError(f"degenerate stats for ({when.year}, {when.month}) {col}")
    return val


def check_group(stats: pd.DataFrame, year: int, month: int, col: str) -> None:
    """Raise if a (year, month) group cannot be standardized."""
    try:
        sigma = float(stats.loc[(year, month), f"{col}_sigma"])
    except KeyError:
        raise MissingStatsError(f"no stats for ({year}, {month})") from None
    if not np.isfinite(sigma) or sigma <= SIGMA_FLOOR:
        raise DegenerateGroupError(f"({year}, {month}) {col}: sigma degenerate")
