"""File contracts of the pipeline.

Every artifact that crosses a stage boundary is a plain CSV or JSON file
with an exact header, so each stage is independently inspectable. Readers
validate the schema and raise SchemaError with row/column diagnostics;
writers produce deterministic byte-identical output for identical inputs
(no timestamps, stable column order, shortest-roundtrip floats).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import MissingPrerequisiteError, MissingStatsError, SchemaError
from .panel import SCHEMES, FarmSpec
from .solar import GeoPoint, PanelGeometry, PvParams

WEATHER_COLUMNS = [
    "timestamp", "location_id", "ssrd_fc", "ssrd_obs",
    "dni_fc", "dni_obs", "t2m_fc", "t2m_obs",
]
FARM_COLUMNS = [
    "farm_id", "lat", "lon", "capacity_mw",
    "tilt_deg", "azimuth_deg", "scheme", "tariff_eur_mwh",
]
PRICE_COLUMNS = ["timestamp", "price_eur_mwh"]
LOSS_COLUMNS = [
    "farm_id", "date", "dP_mwh", "dSSRD", "dDNI", "dT", "loss_eur", "X_std",
]
# Raw daily panel before standardization: losses minus the X_std column.
PANEL_COLUMNS = LOSS_COLUMNS[:-1]
SHARING_COLUMNS = [
    "date", "farm_id", "eps_std", "delta_std", "eps_real", "delta_real",
]
INDEX_SERIES_COLUMNS = ["date", "Z", "above_threshold"]
STATS_COLUMNS = ["entity", "series", "year", "month", "mu", "sigma"]
COVARIATE_COLUMNS = ["date", "Y1", "Y2"]

TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
DATE_FORMAT = "%Y-%m-%d"

INDEX_SPEC_KEYS = [
    "weights", "z0", "quantile", "reference_location", "seed", "objective_value",
]
REGISTRY_KEYS = ["farm_id", "a", "p", "q", "phi", "deviance"]


def _load_csv(path, columns: list[str], name: str) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise MissingPrerequisiteError(f"{name} file {path} does not exist")
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise SchemaError(f"{path}: not parseable as CSV ({exc})") from exc
    if list(df.columns) != columns:
        raise SchemaError(
            f"{path}: header {list(df.columns)} does not match the contract "
            f"{columns}"
        )
    if df.empty:
        raise SchemaError(f"{path}: no data rows")
    return df


def _numeric(df: pd.DataFrame, col: str, path, allow_nan: bool = False) -> np.ndarray:
    values = pd.to_numeric(df[col], errors="coerce")
    bad = values.isna() & df[col].notna() if allow_nan else values.isna()
    if bad.any():
        rows = (df.index[bad] + 2)[:3].tolist()  # 1-based plus header line
        raise SchemaError(f"{path}: column {col!r} not numeric at lines {rows}")
    return values.to_numpy(dtype=float)


def _timestamps(df: pd.DataFrame, col: str, path) -> pd.DatetimeIndex:
    parsed = pd.to_datetime(df[col], utc=True, errors="coerce")
    bad = parsed.isna()
    if bad.any():
        rows = (df.index[bad] + 2)[:3].tolist()
        raise SchemaError(
            f"{path}: column {col!r} not ISO-8601 timestamps at lines {rows}"
        )
    return pd.DatetimeIndex(parsed.dt.tz_localize(None))


def read_weather(path) -> pd.DataFrame:
    """Hourly forecast/observed weather for every location.

    Returns a frame with a naive-UTC ``timestamp`` column; ``dni_fc`` and
    ``dni_obs`` may be NaN (the production chain falls back to the
    irradiance split), all other readings must be present, and
    irradiances must be non-negative.
    """
    df = _load_csv(path, WEATHER_COLUMNS, "weather")
    out = pd.DataFrame({"timestamp": _timestamps(df, "timestamp", path)})
    out["location_id"] = df["location_id"].astype(str)
    for col in ("ssrd_fc", "ssrd_obs", "t2m_fc", "t2m_obs"):
        out[col] = _numeric(df, col, path)
    for col in ("dni_fc", "dni_obs"):
        out[col] = _numeric(df, col, path, allow_nan=True)
    for col in ("ssrd_fc", "ssrd_obs", "dni_fc", "dni_obs"):
        neg = out[col] < 0.0
        if neg.any():
            rows = (out.index[neg] + 2)[:3].tolist()
            raise SchemaError(f"{path}: negative {col} at lines {rows}")
    dup = out.duplicated(subset=["timestamp", "location_id"])
    if dup.any():
        rows = (out.index[dup] + 2)[:3].tolist()
        raise SchemaError(
            f"{path}: duplicate (timestamp, location_id) rows at lines {rows}"
        )
    return out[WEATHER_COLUMNS]


def weather_for_location(weather: pd.DataFrame, location_id: str) -> pd.DataFrame:
    """One location's block, indexed and sorted by timestamp."""
    block = weather[weather["location_id"] == str(location_id)]
    if block.empty:
        raise SchemaError(f"no weather rows for location {location_id!r}")
    block = block.set_index("timestamp").sort_index()
    return block.drop(columns=["location_id"])


def read_farms(path) -> list[FarmSpec]:
    """Farm descriptions; every row becomes a validated FarmSpec."""
    df = _load_csv(path, FARM_COLUMNS, "farms")
    ids = df["farm_id"].astype(str)
    if ids.duplicated().any():
        rows = (df.index[ids.duplicated()] + 2)[:3].tolist()
        raise SchemaError(f"{path}: duplicate farm_id at lines {rows}")
    numeric = {
        col: _numeric(df, col, path)
        for col in ("lat", "lon", "capacity_mw", "tilt_deg", "azimuth_deg",
                    "tariff_eur_mwh")
    }
    farms = []
    for i in range(len(df)):
        scheme = str(df["scheme"].iloc[i])
        if scheme not in SCHEMES:
            raise SchemaError(
                f"{path}: line {i + 2}: scheme {scheme!r} not one of {SCHEMES}"
            )
        try:
            farms.append(
                FarmSpec(
                    farm_id=str(ids.iloc[i]),
                    point=GeoPoint(numeric["lat"][i], numeric["lon"][i]),
                    panel=PanelGeometry(
                        numeric["tilt_deg"][i], numeric["azimuth_deg"][i]
                    ),
                    pv=PvParams(capacity_dc_mw=numeric["capacity_mw"][i]),
                    scheme=scheme,
                    tariff_eur_mwh=numeric["tariff_eur_mwh"][i],
                )
            )
        except ValueError as exc:
            raise SchemaError(f"{path}: line {i + 2}: {exc}") from exc
    return farms


def read_prices(path) -> pd.Series:
    """Hourly day-ahead prices as a timestamp-indexed series."""
    df = _load_csv(path, PRICE_COLUMNS, "prices")
    stamps = _timestamps(df, "timestamp", path)
    if stamps.duplicated().any():
        rows = (df.index[pd.Series(stamps).duplicated()] + 2)[:3].tolist()
        raise SchemaError(f"{path}: duplicate timestamps at lines {rows}")
    values = _numeric(df, "price_eur_mwh", path)
    return pd.Series(values, index=stamps, name="price_eur_mwh").sort_index()


def read_losses(path) -> pd.DataFrame:
    """Per-farm daily loss panel with standardized losses."""
    df = _load_csv(path, LOSS_COLUMNS, "losses")
    out = pd.DataFrame({"farm_id": df["farm_id"].astype(str)})
    out["date"] = _timestamps(df, "date", path)
    for col in LOSS_COLUMNS[2:]:
        out[col] = _numeric(df, col, path)
    return out


def read_panel(path) -> pd.DataFrame:
    """Raw per-farm daily loss panel (before standardization)."""
    df = _load_csv(path, PANEL_COLUMNS, "panel")
    out = pd.DataFrame({"farm_id": df["farm_id"].astype(str)})
    out["date"] = _timestamps(df, "date", path)
    for col in PANEL_COLUMNS[2:]:
        out[col] = _numeric(df, col, path)
    return out


def read_covariates(path) -> pd.DataFrame:
    """Standardized reference covariates, indexed by date."""
    df = _load_csv(path, COVARIATE_COLUMNS, "covariates")
    out = pd.DataFrame(
        {"Y1": _numeric(df, "Y1", path), "Y2": _numeric(df, "Y2", path)},
        index=_timestamps(df, "date", path),
    )
    out.index.name = "date"
    return out


def read_monthly_stats(path) -> pd.DataFrame:
    """Long-format monthly statistics (one row per entity/series/month)."""
    df = _load_csv(path, STATS_COLUMNS, "monthly stats")
    out = pd.DataFrame(
        {
            "entity": df["entity"].astype(str),
            "series": df["series"].astype(str),
            "year": _numeric(df, "year", path).astype(int),
            "month": _numeric(df, "month", path).astype(int),
            "mu": _numeric(df, "mu", path),
            "sigma": _numeric(df, "sigma", path),
        }
    )
    return out


def stats_frame(stats: pd.DataFrame, entity: str) -> pd.DataFrame:
    """One entity's monthly statistics in the wide shape the
    standardization helpers consume: indexed by (year, month) with
    ``{series}_mu`` / ``{series}_sigma`` columns."""
    sub = stats[stats["entity"] == str(entity)]
    if sub.empty:
        raise MissingStatsError(f"no monthly statistics for entity {entity!r}")
    wide = sub.pivot(index=["year", "month"], columns="series",
                     values=["mu", "sigma"])
    wide.columns = [f"{series}_{stat}" for stat, series in wide.columns]
    return wide


def stats_to_rows(wide: pd.DataFrame, entity: str, cols: list[str]) -> pd.DataFrame:
    """Flatten a wide monthly-statistics frame into long contract rows.

    Months where a statistic is undefined (degenerate group) are left out
    so every written row carries finite values.
    """
    rows = []
    for (year, month), row in wide.iterrows():
        for col in cols:
            mu, sigma = row[f"{col}_mu"], row[f"{col}_sigma"]
            if np.isnan(mu) or np.isnan(sigma):
                continue
            rows.append(
                {
                    "entity": str(entity),
                    "series": col,
                    "year": int(year),
                    "month": int(month),
                    "mu": float(mu),
                    "sigma": float(sigma),
                }
            )
    return pd.DataFrame(rows, columns=STATS_COLUMNS)


def read_index_series(path) -> pd.DataFrame:
    """Daily index values with the above-threshold flag."""
    df = _load_csv(path, INDEX_SERIES_COLUMNS, "index series")
    out = pd.DataFrame(
        {
            "Z": _numeric(df, "Z", path),
            "above_threshold": _numeric(df, "above_threshold", path).astype(bool),
        },
        index=_timestamps(df, "date", path),
    )
    out.index.name = "date"
    return out


# -- writers -------------------------------------------------------------------


def _write_csv(df: pd.DataFrame, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)


def write_table(df: pd.DataFrame, path) -> None:
    """Free-format CSV emission for plot-ready and diagnostic tables."""
    _write_csv(df, path)


def write_weather(df: pd.DataFrame, path) -> None:
    out = df[WEATHER_COLUMNS].copy()
    out["timestamp"] = pd.DatetimeIndex(out["timestamp"]).strftime(TIMESTAMP_FORMAT)
    _write_csv(out, path)


def write_farms(df: pd.DataFrame, path) -> None:
    _write_csv(df[FARM_COLUMNS], path)


def write_prices(df: pd.DataFrame, path) -> None:
    out = df[PRICE_COLUMNS].copy()
    out["timestamp"] = pd.DatetimeIndex(out["timestamp"]).strftime(TIMESTAMP_FORMAT)
    _write_csv(out, path)


def write_losses(df: pd.DataFrame, path) -> None:
    out = df[LOSS_COLUMNS].copy()
    out["date"] = pd.DatetimeIndex(out["date"]).strftime(DATE_FORMAT)
    _write_csv(out, path)


def write_panel(df: pd.DataFrame, path) -> None:
    out = df[PANEL_COLUMNS].copy()
    out["date"] = pd.DatetimeIndex(out["date"]).strftime(DATE_FORMAT)
    _write_csv(out, path)


def write_covariates(df: pd.DataFrame, path) -> None:
    out = df.reset_index()
    out["date"] = pd.DatetimeIndex(out["date"]).strftime(DATE_FORMAT)
    _write_csv(out[COVARIATE_COLUMNS], path)


def write_monthly_stats(df: pd.DataFrame, path) -> None:
    _write_csv(df[STATS_COLUMNS], path)


def write_index_series(df: pd.DataFrame, path) -> None:
    out = df.reset_index()
    out["date"] = pd.DatetimeIndex(out["date"]).strftime(DATE_FORMAT)
    out["above_threshold"] = out["above_threshold"].astype(int)
    _write_csv(out[INDEX_SERIES_COLUMNS], path)


def write_sharing(df: pd.DataFrame, path) -> None:
    out = df[SHARING_COLUMNS].copy()
    out["date"] = pd.DatetimeIndex(out["date"]).strftime(DATE_FORMAT)
    _write_csv(out, path)


def read_sharing(path) -> pd.DataFrame:
    df = _load_csv(path, SHARING_COLUMNS, "sharing")
    out = pd.DataFrame({"date": _timestamps(df, "date", path)})
    out["farm_id"] = df["farm_id"].astype(str)
    for col in SHARING_COLUMNS[2:]:
        out[col] = _numeric(df, col, path)
    return out


# -- JSON artifacts --------------------------------------------------------------


def write_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise MissingPrerequisiteError(f"artifact {path} does not exist")
    with open(path, encoding="utf-8") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc})") from exc


def write_index_spec(spec, path) -> None:
    """Serialize an index definition to the index.json contract."""
    write_json(
        {
            "weights": [float(w) for w in spec.weights],
            "z0": float(spec.z0),
            "quantile": float(spec.quantile),
            "reference_location": spec.reference_location,
            "seed": spec.seed,
            "objective_value": spec.objective_value,
        },
        path,
    )


def read_index_spec(path):
    from .index import IndexSpec

    raw = read_json(path)
    missing = [k for k in INDEX_SPEC_KEYS if k not in raw]
    if missing:
        raise SchemaError(f"{path}: missing keys {missing}")
    try:
        return IndexSpec(
            weights=np.asarray(raw["weights"], dtype=float),
            z0=float(raw["z0"]),
            quantile=float(raw["quantile"]),
            reference_location=str(raw["reference_location"]),
            seed=raw["seed"],
            objective_value=raw["objective_value"],
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def write_model_registry(entries: list[dict], path) -> None:
    """Per-farm loss-model registry: farm_id, a, p, q, phi, deviance."""
    rows = []
    for entry in entries:
        rows.append(
            {
                "farm_id": str(entry["farm_id"]),
                "a": [float(v) for v in entry["a"]],
                "p": float(entry["p"]),
                "q": float(entry["q"]),
                "phi": float(entry["phi"]),
                "deviance": float(entry["deviance"]),
            }
        )
    write_json(rows, path)


def read_model_registry(path) -> list[dict]:
    raw = read_json(path)
    if not isinstance(raw, list) or not raw:
        raise SchemaError(f"{path}: expected a non-empty list of farm entries")
    for i, entry in enumerate(raw):
        missing = [k for k in REGISTRY_KEYS if k not in entry]
        if missing:
            raise SchemaError(f"{path}: entry {i} missing keys {missing}")
    return raw


def registry_to_models(entries: list[dict]):
    """Rebuild fitted loss models from their registry entries."""
    from .glm import TweedieLossModel

    models = []
    for entry in entries:
        model = TweedieLossModel(p=float(entry["p"]), q=float(entry["q"]))
        model.coef_ = np.asarray(entry["a"], dtype=float)
        model.phi_ = float(entry["phi"])
        model.deviance_ = float(entry["deviance"])
        model.n_floored_ = 0
        model.n_iter_ = 0
        models.append(model)
    return models


def write_scenario_model(marginals, copula, path) -> None:
    """Serialize the fitted covariate marginals and copula correlation."""
    write_json(
        {
            "marginals": [
                {
                    "family": m.family,
                    "params": [float(v) for v in m.params],
                    "loglik": float(m.loglik),
                }
                for m in marginals
            ],
            "correlation": np.asarray(copula.corr, dtype=float).tolist(),
        },
        path,
    )


def read_scenario_model(path):
    from .scenario import MARGINAL_FAMILIES, CopulaFit, MarginalFit

    raw = read_json(path)
    if not isinstance(raw, dict) or not {"marginals", "correlation"} <= set(raw):
        raise SchemaError(f"{path}: expected keys 'marginals' and 'correlation'")
    marginals = []
    for i, entry in enumerate(raw["marginals"]):
        family = str(entry.get("family"))
        if family not in MARGINAL_FAMILIES:
            raise SchemaError(f"{path}: marginal {i} has unknown family {family!r}")
        marginals.append(
            MarginalFit(
                family=family,
                params=tuple(float(v) for v in entry["params"]),
                loglik=float(entry["loglik"]),
            )
        )
    corr = np.asarray(raw["correlation"], dtype=float)
    if corr.shape != (len(marginals), len(marginals)):
        raise SchemaError(f"{path}: correlation shape {corr.shape} does not match")
    return marginals, CopulaFit(corr=corr)


# -- unit conversion helpers ------------------------------------------------------


def cumulative_to_hourly(cum: pd.Series) -> pd.Series:
    """Convert a cumulative-since-midnight J/m² archive to hourly mean W/m².

    Within each UTC day the column is differenced (the first stamp keeps
    its own value, being the energy since midnight) and divided by 3600 s.
    Decreasing values within a day mean the column is not cumulative.
    """
    if not isinstance(cum.index, pd.DatetimeIndex):
        raise ValueError("cumulative series must be indexed by timestamps")
    cum = cum.sort_index()
    day = cum.index.floor("D").to_numpy()
    values = cum.to_numpy(dtype=float)
    steps = np.diff(values, prepend=0.0)
    starts = np.r_[True, day[1:] != day[:-1]]
    steps[starts] = values[starts]
    if np.any(steps < 0.0):
        where = cum.index[steps < 0.0][:3].tolist()
        raise ValueError(f"cumulative energy decreases within a day at {where}")
    return pd.Series(steps / 3600.0, index=cum.index, name=cum.name)
