"""Solar geometry and photovoltaic production chain.

Position comes from the Astronomer's Almanac low-precision formulas
(about 0.01 degree over 1950-2050, far inside the +-1 degree contract
of this chain). Global horizontal irradiance is split into direct and
diffuse with the Erbs correlation, transposed to the plane of array
with an isotropic sky model, and converted to AC power with a NOCT
cell-temperature model and the PVWatts DC equation plus inverter
clipping.

All irradiances are W/m2, powers are MW, angles are degrees, times are
UTC.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .exceptions import PolarEdgeError

SOLAR_CONSTANT = 1367.0
_J2000 = np.datetime64("2000-01-01T12:00:00")


@dataclass(frozen=True)
class GeoPoint:
    """Geographic location in decimal degrees (north/east positive)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class PanelGeometry:
    """Fixed-mount array orientation.

    tilt_deg is measured from horizontal, azimuth_deg clockwise from
    north (180 = facing south).
    """

    tilt_deg: float = 25.0
    azimuth_deg: float = 180.0

    def __post_init__(self):
        if not 0.0 <= self.tilt_deg <= 90.0:
            raise ValueError(f"tilt {self.tilt_deg} outside [0, 90]")
        if not 0.0 <= self.azimuth_deg < 360.0:
            raise ValueError(f"azimuth {self.azimuth_deg} outside [0, 360)")


@dataclass(frozen=True)
class PvParams:
    """Electrical parameters of one plant.

    ac_limit_mw defaults to the DC nameplate, i.e. an inverter sized at
    the array rating.
    """

    capacity_dc_mw: float
    temp_coeff_per_c: float = -0.004
    noct_c: float = 45.0
    inverter_eff: float = 0.96
    ac_limit_mw: float | None = None

    def __post_init__(self):
        if self.capacity_dc_mw <= 0.0:
            raise ValueError("capacity_dc_mw must be positive")
        if not 0.0 < self.inverter_eff <= 1.0:
            raise ValueError("inverter_eff must be in (0, 1]")
        if self.ac_limit_mw is not None and self.ac_limit_mw <= 0.0:
            raise ValueError("ac_limit_mw must be positive")

    @property
    def ac_cap_mw(self) -> float:
        return self.capacity_dc_mw if self.ac_limit_mw is None else self.ac_limit_mw


@dataclass(frozen=True)
class SolarPosition:
    """Sun position and normal-incidence extraterrestrial irradiance."""

    zenith_deg: np.ndarray
    azimuth_deg: np.ndarray
    e0_normal: np.ndarray


def _days_since_j2000(times: np.ndarray) -> np.ndarray:
    t = np.asarray(times, dtype="datetime64[s]")
    return (t - _J2000) / np.timedelta64(1, "D")


def solar_position(times, point: GeoPoint) -> SolarPosition:
    """Compute sun zenith/azimuth and extraterrestrial irradiance.

    Parameters
    ----------
    times : array-like of datetime64
        Instants in UTC.
    point : GeoPoint
        Observer location.

    Returns
    -------
    SolarPosition
        Geometric (unrefracted) zenith and azimuth in degrees, azimuth
        clockwise from north, plus the normal-incidence extraterrestrial
        irradiance corrected for the earth-sun distance.
    """
    n = _days_since_j2000(times)

    # Almanac mean elements, degrees
    mnlong = np.mod(280.460 + 0.9856474 * n, 360.0)
    mnanom = np.radians(np.mod(357.528 + 0.9856003 * n, 360.0))
    eclong = np.radians(
        np.mod(mnlong + 1.915 * np.sin(mnanom) + 0.020 * np.sin(2.0 * mnanom), 360.0)
    )
    oblqec = np.radians(23.439 - 0.0000004 * n)

    ra = np.arctan2(np.cos(oblqec) * np.sin(eclong), np.cos(eclong))
    dec = np.arcsin(np.sin(oblqec) * np.sin(eclong))

    # Greenwich mean sidereal time, hours -> local hour angle, radians
    gmst = np.mod(18.697374558 + 24.06570982441908 * n, 24.0)
    ha = np.radians(np.mod(gmst * 15.0 + point.lon - np.degrees(ra) + 180.0, 360.0) - 180.0)

    lat = np.radians(point.lat)
    cosz = np.sin(lat) * np.sin(dec) + np.cos(lat) * np.cos(dec) * np.cos(ha)
    cosz = np.clip(cosz, -1.0, 1.0)
    zenith = np.degrees(np.arccos(cosz))

    sinz = np.sin(np.arccos(cosz))
    with np.errstate(divide="ignore", invalid="ignore"):
        cos_az = (np.sin(dec) - cosz * np.sin(lat)) / (sinz * np.cos(lat))
    cos_az = np.clip(np.where(np.isfinite(cos_az), cos_az, 1.0), -1.0, 1.0)
    az = np.degrees(np.arccos(cos_az))
    azimuth = np.where(np.sin(ha) > 0.0, 360.0 - az, az)

    # Earth-sun distance in AU from the same mean anomaly
    r_au = 1.00014 - 0.01671 * np.cos(mnanom) - 0.00014 * np.cos(2.0 * mnanom)
    e0 = SOLAR_CONSTANT / r_au**2

    return SolarPosition(zenith_deg=zenith, azimuth_deg=azimuth, e0_normal=e0)


def hour_midpoints(date) -> np.ndarray:
    """The 24 half-hour instants of a UTC calendar date."""
    day = np.datetime64(np.datetime64(date, "D"), "s")
    return day + np.timedelta64(30, "m") + np.arange(24) * np.timedelta64(1, "h")


def sunrise_sunset(date, point: GeoPoint) -> tuple[int, int]:
    """First and last UTC hour indices of a date with the sun up.

    An hour counts as daylight when the geometric zenith at its midpoint
    is below 90 degrees.

    Raises
    ------
    PolarEdgeError
        If the sun never rises or never sets on that date (polar night
        or polar day), in which case a daylight window is undefined.
    """
    pos = solar_position(hour_midpoints(date), point)
    up = pos.zenith_deg < 90.0
    if not up.any() or up.all():
        raise PolarEdgeError(
            f"no sunrise/sunset at lat={point.lat} on {np.datetime64(date, 'D')}"
        )
    idx = np.nonzero(up)[0]
    return int(idx[0]), int(idx[-1])


def erbs_split(ghi, zenith_deg, e0_normal):
    """Split global horizontal irradiance into direct normal and diffuse.

    Uses the Erbs diffuse-fraction correlation on the clearness index
    k_t = ghi / (e0 * cos(zenith)), with k_t clipped to [0, 1]. The
    direct component is recovered from closure, so

        ghi == dhi + dni * cos(zenith)

    holds exactly wherever the sun is up. Below the horizon both
    components are zero.

    Returns
    -------
    (dni, dhi) : tuple of ndarray
    """
    ghi = np.asarray(ghi, dtype=float)
    zenith = np.asarray(zenith_deg, dtype=float)
    e0 = np.asarray(e0_normal, dtype=float)

    cosz = np.cos(np.radians(zenith))
    up = (zenith < 90.0) & (ghi > 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        kt = np.where(up, ghi / (e0 * cosz), 0.0)
    kt = np.clip(kt, 0.0, 1.0)

    df = np.where(
        kt <= 0.22,
        1.0 - 0.09 * kt,
        0.9511 - 0.1604 * kt + 4.388 * kt**2 - 16.638 * kt**3 + 12.336 * kt**4,
    )
    df = np.where(kt > 0.80, 0.165, df)

    dhi = np.where(up, df * ghi, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        dni = np.where(up, (ghi - dhi) / cosz, 0.0)
    return dni, dhi


def poa_irradiance(dni, dhi, ghi, zenith_deg, azimuth_deg, panel: PanelGeometry,
                   albedo: float = 0.2):
    """Plane-of-array irradiance under an isotropic sky.

    Beam uses the cosine of the angle of incidence floored at zero; sky
    diffuse and ground reflection use the standard isotropic view
    factors (1 +- cos(tilt)) / 2.
    """
    zen = np.radians(np.asarray(zenith_deg, dtype=float))
    saz = np.radians(np.asarray(azimuth_deg, dtype=float))
    tilt = np.radians(panel.tilt_deg)
    paz = np.radians(panel.azimuth_deg)

    cos_aoi = (
        np.cos(zen) * np.cos(tilt)
        + np.sin(zen) * np.sin(tilt) * np.cos(saz - paz)
    )
    beam = np.asarray(dni, dtype=float) * np.clip(cos_aoi, 0.0, None)
    sky = np.asarray(dhi, dtype=float) * (1.0 + np.cos(tilt)) / 2.0
    ground = np.asarray(ghi, dtype=float) * albedo * (1.0 - np.cos(tilt)) / 2.0
    return beam + sky + ground


def cell_temperature(t_air_c, poa, noct_c: float = 45.0):
    """NOCT cell temperature: t_air + (NOCT - 20) / 800 * poa."""
    return np.asarray(t_air_c, dtype=float) + (noct_c - 20.0) / 800.0 * np.asarray(poa, dtype=float)


def pv_dc_power(poa, t_cell_c, params: PvParams):
    """PVWatts DC power in MW, floored at zero.

    dc = capacity * (poa / 1000) * (1 + temp_coeff * (t_cell - 25)).
    """
    dc = (
        params.capacity_dc_mw
        * (np.asarray(poa, dtype=float) / 1000.0)
        * (1.0 + params.temp_coeff_per_c * (np.asarray(t_cell_c, dtype=float) - 25.0))
    )
    return np.clip(dc, 0.0, None)


def pv_power(poa, t_cell_c, params: PvParams):
    """AC power in MW: inverter efficiency applied to DC, then clipped."""
    ac = pv_dc_power(poa, t_cell_c, params) * params.inverter_eff
    return np.minimum(ac, params.ac_cap_mw)
