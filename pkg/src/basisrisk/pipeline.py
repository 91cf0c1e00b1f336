"""Stage orchestration: configuration, artifacts, and the stage functions.

Each stage reads its declared input artifacts, does one unit of work, and
writes its declared output artifacts into the configured output directory.
All randomness is seeded from the run configuration, no artifact embeds a
wall-clock timestamp, and writers are deterministic, so re-running a stage
with identical inputs reproduces its outputs byte for byte.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np
import pandas as pd

from . import io
from .exceptions import (
    MissingPrerequisiteError,
    MissingStatsError,
    SchemaError,
)
from .glm import fit_gaussian, grid_search_tweedie
from .index import (
    FarmIndexModel,
    ScenarioIndexEngine,
    filter_days,
    initial_score,
    optimize,
    threshold,
)
from .panel import (
    daily_farm_losses,
    daily_reference_deltas,
    group_sigma,
    monthly_stats,
    standardize,
)
from .scenario import (
    SynthConfig,
    fit_scenario_model,
    sample_weather,
    synth_portfolio,
)
from .sharing import (
    SharingReport,
    capacity_distance_diagnostics,
    contribution_variance,
    metrics,
    realize,
)
from .solar import GeoPoint

log = logging.getLogger(__name__)

COVARIATES = ["Y1", "Y2"]
REFERENCE_SERIES = ["dSSRD", "dDNI"]

# Artifact file names inside the output directory.
PANEL_RAW_FILE = "panel_raw.csv"
LOSS_FILE = "losses.csv"
STATS_FILE = "monthly_stats.csv"
COVARIATE_FILE = "covariates.csv"
GAUSSIAN_MODELS_FILE = "models_gaussian.json"
SCORE_SERIES_FILE = "score.csv"
SCORE_SPEC_FILE = "score.json"
FILTERED_FILE = "filtered.csv"
MODELS_FILE = "models.json"
TWEEDIE_GRID_FILE = "tweedie_grid.csv"
SCENARIO_MODEL_FILE = "scenario_model.json"
INDEX_SPEC_FILE = "index.json"
INDEX_SERIES_FILE = "index.csv"
SHARING_FILE = "sharing.csv"
REPORT_FILE = "report.json"
RATIOS_FILE = "ratios.csv"

GRID_P_RANGE = (0.5, 2.0)
GRID_Q_RANGE = (0.0, 2.0)
REPORT_GRID_NODES = 64
REPORT_GRID_UPPER_QUANTILE = 0.999


@dataclass(frozen=True)
class RunConfig:
    """One pipeline run: input locations, output directory, and knobs.

    Referenced files are checked when a stage opens them (the ``synth``
    stage creates the input files, so existence at configuration time is
    not required).
    """

    weather: str
    farms: str
    prices: str
    out_dir: str
    reference_location: str = "REF"
    reference_lat: float = 48.0
    reference_lon: float = 11.0
    quantile: float = 0.8
    scenario_size: int = 100_000
    seed: int = 0
    grid_step: float = 0.25
    optimizer_hops: int = 50
    optimizer_step: float = 0.25
    optimizer_subsample: int = 10_000
    threads: int | None = None
    synth: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.quantile < 1.0:
            raise SchemaError("quantile must lie in (0, 1)")
        if self.scenario_size < 2:
            raise SchemaError("scenario_size must be at least 2")
        if self.grid_step <= 0.0:
            raise SchemaError("grid_step must be positive")
        if self.optimizer_hops < 0:
            raise SchemaError("optimizer_hops must be non-negative")
        if not isinstance(self.synth, dict):
            raise SchemaError("synth must be a mapping of generator options")

    def out(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


def _coerce_override(text: str):
    """Parse an override value: JSON literal when possible, else string."""
    import json

    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from a JSON file plus flat key=value overrides.

    Relative paths in the file resolve against the file's directory, so a
    config travels with its data. Override keys mirror the field names;
    generator options nest as ``synth.<option>``.
    """
    raw = io.read_json(path)
    if not isinstance(raw, dict):
        raise SchemaError(f"{path}: configuration must be a JSON object")
    for key, value in (overrides or {}).items():
        if isinstance(value, str):
            value = _coerce_override(value)
        if key.startswith("synth."):
            raw.setdefault("synth", {})
            raw["synth"][key[len("synth."):]] = value
        else:
            raw[key] = value
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise SchemaError(f"unknown configuration keys {unknown}")
    missing = [k for k in ("weather", "farms", "prices", "out_dir") if k not in raw]
    if missing:
        raise SchemaError(f"configuration missing required keys {missing}")
    base = os.path.dirname(os.path.abspath(path))
    for key in ("weather", "farms", "prices", "out_dir"):
        raw[key] = os.path.normpath(os.path.join(base, str(raw[key])))
    try:
        return RunConfig(**raw)
    except TypeError as exc:
        raise SchemaError(f"invalid configuration: {exc}") from exc


def _run_seeds(seed: int) -> tuple[int, int]:
    """Two decorrelated integer seeds (scenario sampling, optimization)."""
    children = np.random.SeedSequence(seed).spawn(2)
    return tuple(int(c.generate_state(1)[0]) for c in children)


# -- stage bodies ----------------------------------------------------------------


def stage_synth(cfg: RunConfig) -> list[str]:
    """Generate the synthetic portfolio at the configured input paths."""
    options = dict(cfg.synth)
    options.setdefault("seed", cfg.seed)
    options.setdefault("reference_location", cfg.reference_location)
    options.setdefault("reference_lat", cfg.reference_lat)
    options.setdefault("reference_lon", cfg.reference_lon)
    try:
        synth_cfg = SynthConfig(**options)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid synth options: {exc}") from exc
    portfolio = synth_portfolio(synth_cfg)
    io.write_weather(portfolio.weather, cfg.weather)
    io.write_farms(portfolio.farms, cfg.farms)
    io.write_prices(portfolio.prices, cfg.prices)
    return [cfg.weather, cfg.farms, cfg.prices]


def stage_losses(cfg: RunConfig) -> list[str]:
    """Hourly production deltas aggregated to the raw daily loss panel."""
    weather = io.read_weather(cfg.weather)
    farms = io.read_farms(cfg.farms)
    needs_prices = any(farm.scheme != "feedin" for farm in farms)
    prices = None
    if os.path.exists(cfg.prices):
        prices = io.read_prices(cfg.prices)
    elif needs_prices:
        raise MissingPrerequisiteError(
            f"price file {cfg.prices} is missing but a farm settles on "
            "market prices"
        )
    reference = io.weather_for_location(weather, cfg.reference_location)
    ref_daily = daily_reference_deltas(
        reference, GeoPoint(cfg.reference_lat, cfg.reference_lon)
    )
    blocks = []
    for farm in farms:
        farm_wx = io.weather_for_location(weather, farm.farm_id)
        daily = daily_farm_losses(farm_wx, farm, prices)
        block = daily.join(ref_daily, how="inner").reset_index()
        block.insert(0, "farm_id", farm.farm_id)
        blocks.append(block[io.PANEL_COLUMNS])
    panel = pd.concat(blocks, ignore_index=True)
    path = cfg.out(PANEL_RAW_FILE)
    io.write_panel(panel, path)
    return [path]


def stage_stationarize(cfg: RunConfig) -> list[str]:
    """Monthly standardization of reference deltas and farm losses.

    Emits the standardized covariates, the completed loss panel (X_std
    filled in), and every monthly statistic needed to invert the mapping
    later. Panel rows whose month lacks valid statistics are dropped.
    """
    panel = io.read_panel(cfg.out(PANEL_RAW_FILE))
    reference = (
        panel.drop_duplicates("date")
        .set_index("date")[REFERENCE_SERIES]
        .sort_index()
    )
    ref_stats = monthly_stats(reference, REFERENCE_SERIES)
    ref_std = standardize(reference, ref_stats, REFERENCE_SERIES)
    covariates = pd.DataFrame(
        {
            "Y1": ref_std[f"{REFERENCE_SERIES[0]}_std"],
            "Y2": ref_std[f"{REFERENCE_SERIES[1]}_std"],
        }
    ).dropna()
    covariates.index.name = "date"

    stats_rows = [io.stats_to_rows(ref_stats, cfg.reference_location,
                                   REFERENCE_SERIES)]
    blocks = []
    for farm_id, sub in panel.groupby("farm_id", sort=True):
        daily = sub.set_index("date").sort_index()
        farm_stats = monthly_stats(daily, ["dP_mwh"])
        std = standardize(daily, farm_stats, ["dP_mwh"])
        stats_rows.append(io.stats_to_rows(farm_stats, farm_id, ["dP_mwh"]))
        block = daily.copy()
        block["X_std"] = std["dP_mwh_std"]
        block = block[block.index.isin(covariates.index)].dropna(subset=["X_std"])
        blocks.append(block.reset_index())
    losses = pd.concat(blocks, ignore_index=True)
    dropped = len(panel) - len(losses)
    if dropped:
        log.warning("dropped %d panel rows without valid monthly statistics",
                    dropped)

    loss_path = cfg.out(LOSS_FILE)
    stats_path = cfg.out(STATS_FILE)
    cov_path = cfg.out(COVARIATE_FILE)
    io.write_losses(losses, loss_path)
    io.write_monthly_stats(pd.concat(stats_rows, ignore_index=True), stats_path)
    io.write_covariates(covariates, cov_path)
    return [loss_path, stats_path, cov_path]


def _farm_design(losses: pd.DataFrame, covariates: pd.DataFrame, farm_id: str):
    """One farm's (covariate matrix, standardized loss vector) pair."""
    sub = losses[losses["farm_id"] == farm_id].set_index("date")
    merged = sub.join(covariates, how="inner")
    return merged[COVARIATES].to_numpy(), merged["X_std"].to_numpy()


def stage_fit_gaussian(cfg: RunConfig) -> list[str]:
    """Per-farm Gaussian regression of standardized losses on covariates."""
    losses = io.read_losses(cfg.out(LOSS_FILE))
    covariates = io.read_covariates(cfg.out(COVARIATE_FILE))
    entries = []
    for farm_id in sorted(losses["farm_id"].unique()):
        Y, x = _farm_design(losses, covariates, farm_id)
        model = fit_gaussian(Y, x)
        rss = model.resid_var_ * (model.n_obs_ - model.coef_.size)
        entries.append(
            {
                "farm_id": farm_id,
                "a": model.coef_,
                "p": 1.0,
                "q": 0.0,
                "phi": model.resid_var_,
                "deviance": rss,
            }
        )
    path = cfg.out(GAUSSIAN_MODELS_FILE)
    io.write_model_registry(entries, path)
    return [path]


def stage_score(cfg: RunConfig) -> list[str]:
    """Preliminary index: average Gaussian weights scored on covariates."""
    registry = io.read_model_registry(cfg.out(GAUSSIAN_MODELS_FILE))
    models = io.registry_to_models(registry)
    covariates = io.read_covariates(cfg.out(COVARIATE_FILE))
    a_bar, z = initial_score(models, covariates[COVARIATES].to_numpy())
    z0 = threshold(z, cfg.quantile)
    series = pd.DataFrame(
        {"Z": z, "above_threshold": z > z0}, index=covariates.index
    )
    series_path = cfg.out(SCORE_SERIES_FILE)
    spec_path = cfg.out(SCORE_SPEC_FILE)
    io.write_index_series(series, series_path)
    io.write_json(
        {
            "weights": [float(w) for w in a_bar],
            "z0": float(z0),
            "quantile": float(cfg.quantile),
        },
        spec_path,
    )
    return [series_path, spec_path]


def stage_filter(cfg: RunConfig) -> list[str]:
    """Restrict the loss panel to days above the preliminary threshold."""
    score = io.read_index_series(cfg.out(SCORE_SERIES_FILE))
    spec = io.read_json(cfg.out(SCORE_SPEC_FILE))
    losses = io.read_losses(cfg.out(LOSS_FILE))
    mask = filter_days(score["Z"].to_numpy(), float(spec["z0"]))
    kept = score.index[mask]
    filtered = losses[losses["date"].isin(kept)]
    path = cfg.out(FILTERED_FILE)
    io.write_losses(filtered, path)
    return [path]


def stage_fit_tweedie(cfg: RunConfig) -> list[str]:
    """Grid-searched Tweedie fit per farm on the filtered days."""
    losses = io.read_losses(cfg.out(FILTERED_FILE))
    covariates = io.read_covariates(cfg.out(COVARIATE_FILE))
    p_grid = np.arange(GRID_P_RANGE[0], GRID_P_RANGE[1] + 1e-9, cfg.grid_step)
    q_grid = np.arange(GRID_Q_RANGE[0], GRID_Q_RANGE[1] + 1e-9, cfg.grid_step)
    entries, table = [], []
    for farm_id in sorted(losses["farm_id"].unique()):
        Y, x = _farm_design(losses, covariates, farm_id)
        best, rows = grid_search_tweedie(Y, x, p_grid, q_grid)
        entries.append(
            {
                "farm_id": farm_id,
                "a": best.coef_,
                "p": best.p,
                "q": best.q,
                "phi": best.phi_,
                "deviance": best.deviance_,
            }
        )
        table.extend(
            {"farm_id": farm_id, "p": p, "q": q, "criterion": crit,
             "deviance": dev}
            for p, q, crit, dev in rows
        )
    models_path = cfg.out(MODELS_FILE)
    grid_path = cfg.out(TWEEDIE_GRID_FILE)
    io.write_model_registry(entries, models_path)
    io.write_table(pd.DataFrame(table), grid_path)
    return [models_path, grid_path]


def stage_optimize(cfg: RunConfig) -> list[str]:
    """Search the index weights, then fix the threshold on observed data.

    Scenario rows are drawn from marginal-plus-copula fits of the
    covariates; the optimizer evaluates the pooled tail variance on that
    set with per-candidate requantiled thresholds. The reported z0 is
    the quantile of the *observed* score series under the winning
    weights, and index.csv flags the observed days above it.
    """
    registry = io.read_model_registry(cfg.out(MODELS_FILE))
    models = io.registry_to_models(registry)
    covariates = io.read_covariates(cfg.out(COVARIATE_FILE))
    score_spec = io.read_json(cfg.out(SCORE_SPEC_FILE))
    a0 = np.asarray(score_spec["weights"], dtype=float)

    seed_scenario, seed_optimizer = _run_seeds(cfg.seed)
    marginals, copula = fit_scenario_model(covariates[COVARIATES].to_numpy())
    scenario_path = cfg.out(SCENARIO_MODEL_FILE)
    io.write_scenario_model(marginals, copula, scenario_path)
    scenarios = sample_weather(marginals, copula, cfg.scenario_size,
                               seed_scenario)
    farm_models = [FarmIndexModel(m, scenarios.Y) for m in models]
    spec = optimize(
        a0,
        farm_models,
        scenarios,
        quantile=cfg.quantile,
        seed=seed_optimizer,
        hops=cfg.optimizer_hops,
        step=cfg.optimizer_step,
        subsample=cfg.optimizer_subsample,
        reference_location=cfg.reference_location,
        threads=cfg.threads,
    )
    z_observed = covariates[COVARIATES].to_numpy() @ spec.weights
    z0_observed = threshold(z_observed, cfg.quantile)
    final = replace(spec, z0=z0_observed, seed=cfg.seed)
    series = pd.DataFrame(
        {"Z": z_observed, "above_threshold": z_observed > z0_observed},
        index=covariates.index,
    )
    spec_path = cfg.out(INDEX_SPEC_FILE)
    series_path = cfg.out(INDEX_SERIES_FILE)
    io.write_index_spec(final, spec_path)
    io.write_index_series(series, series_path)
    return [scenario_path, spec_path, series_path]


def _rebuild_engine(cfg: RunConfig) -> ScenarioIndexEngine:
    """Engine on the same scenario set the optimize stage used."""
    registry = io.read_model_registry(cfg.out(MODELS_FILE))
    models = io.registry_to_models(registry)
    marginals, copula = io.read_scenario_model(cfg.out(SCENARIO_MODEL_FILE))
    seed_scenario, _ = _run_seeds(cfg.seed)
    scenarios = sample_weather(marginals, copula, cfg.scenario_size,
                               seed_scenario)
    farm_models = [FarmIndexModel(m, scenarios.Y) for m in models]
    spec = io.read_index_spec(cfg.out(INDEX_SPEC_FILE))
    engine = ScenarioIndexEngine(
        scenarios.Y, farm_models, quantile=spec.quantile, threads=cfg.threads
    )
    return engine


def stage_share(cfg: RunConfig) -> list[str]:
    """Basis risks and their variance-proportional allocation per day.

    Works on the observed days above the final threshold: the corrected
    conditional mean gives each farm's payout, the conditional variance
    gives its allocation weight, and the monthly loss dispersions map
    both risks back to physical units.
    """
    losses = io.read_losses(cfg.out(LOSS_FILE))
    spec = io.read_index_spec(cfg.out(INDEX_SPEC_FILE))
    series = io.read_index_series(cfg.out(INDEX_SERIES_FILE))
    stats = io.read_monthly_stats(cfg.out(STATS_FILE))
    registry = io.read_model_registry(cfg.out(MODELS_FILE))
    farm_ids = [entry["farm_id"] for entry in registry]
    engine = _rebuild_engine(cfg)

    above = series[series["above_threshold"]]
    x_wide = losses.pivot(index="date", columns="farm_id", values="X_std")
    x_wide = x_wide.reindex(index=above.index, columns=farm_ids)

    sigma_dp = pd.DataFrame(index=above.index, columns=farm_ids, dtype=float)
    for farm_id in farm_ids:
        farm_stats = io.stats_frame(stats, farm_id)
        for date in above.index:
            try:
                sigma_dp.loc[date, farm_id] = group_sigma(
                    farm_stats, date, "dP_mwh"
                )
            except MissingStatsError:
                pass

    complete = x_wide.notna().all(axis=1) & sigma_dp.notna().all(axis=1)
    if not complete.all():
        log.warning(
            "dropping %d filtered days lacking the full farm cross-section",
            int((~complete).sum()),
        )
    days = above.index[complete]
    z_days = above.loc[days, "Z"].to_numpy()
    means, variances = engine.moments(z_days, spec.weights)
    eps = x_wide.loc[days].to_numpy() - means.T
    report = realize(eps, variances.T, sigma_dp.loc[days].to_numpy())

    long = pd.DataFrame(
        {
            "date": np.repeat(days.to_numpy(), len(farm_ids)),
            "farm_id": np.tile(farm_ids, len(days)),
            "eps_std": report.eps_std.ravel(),
            "delta_std": report.delta_std.ravel(),
            "eps_real": report.eps_real.ravel(),
            "delta_real": report.delta_real.ravel(),
        }
    )
    path = cfg.out(SHARING_FILE)
    io.write_sharing(long, path)
    return [path]


def stage_report(cfg: RunConfig) -> list[str]:
    """Pool metrics, contribution variances, and plot-ready ratio data."""
    sharing = io.read_sharing(cfg.out(SHARING_FILE))
    spec = io.read_index_spec(cfg.out(INDEX_SPEC_FILE))
    registry = io.read_model_registry(cfg.out(MODELS_FILE))
    farm_ids = [entry["farm_id"] for entry in registry]
    farms = {f.farm_id: f for f in io.read_farms(cfg.farms)}
    missing = [fid for fid in farm_ids if fid not in farms]
    if missing:
        raise SchemaError(f"farms file lacks modelled farms {missing}")
    ordered = [farms[fid] for fid in farm_ids]

    def _wide(col: str) -> np.ndarray:
        frame = sharing.pivot(index="date", columns="farm_id", values=col)
        return frame[farm_ids].to_numpy()

    eps_std = _wide("eps_std")
    eps_real = _wide("eps_real")
    report = SharingReport(
        eps_std=eps_std,
        delta_std=_wide("delta_std"),
        eps_real=eps_real,
        delta_real=_wide("delta_real"),
        total_std=eps_std.sum(axis=1),
        total_real=eps_real.sum(axis=1),
    )
    capacities = [farm.pv.capacity_dc_mw for farm in ordered]
    pool = metrics(report, capacities=capacities, physical=True)

    engine = _rebuild_engine(cfg)
    z_scenario = engine.Y @ spec.weights
    tail = z_scenario > spec.z0
    upper = float(np.quantile(z_scenario, REPORT_GRID_UPPER_QUANTILE))
    grid = (
        np.linspace(spec.z0, upper, REPORT_GRID_NODES)
        if upper > spec.z0
        else np.array([spec.z0])
    )
    _, grid_var = engine.moments(grid, spec.weights)
    var_tail = np.column_stack(
        [np.interp(z_scenario[tail], grid, row) for row in grid_var]
    )
    contrib = contribution_variance(z_scenario[tail], var_tail, spec.z0)

    reference = GeoPoint(cfg.reference_lat, cfg.reference_lon)
    diag = capacity_distance_diagnostics(pool.ratios, ordered, reference)

    farms_out = []
    for i, fid in enumerate(farm_ids):
        row = diag["rows"][i]
        farms_out.append(
            {
                "farm_id": fid,
                "capacity_mw": row["capacity_mw"],
                "distance_km": row["distance_km"],
                "sigma_eps_real": float(pool.sigma_eps[i]),
                "sigma_delta_real": float(pool.sigma_delta[i]),
                "ratio": float(pool.ratios[i]),
                "contribution_variance": float(contrib[i]),
            }
        )
    payload = {
        "index": {
            "weights": [float(w) for w in spec.weights],
            "z0": float(spec.z0),
            "quantile": float(spec.quantile),
            "reference_location": spec.reference_location,
            "objective_value": spec.objective_value,
        },
        "pool": {
            "mean_ratio": pool.mean_ratio,
            "capacity_weighted_mean_ratio": pool.capacity_weighted_mean,
            "ratio_min": pool.ratio_min,
            "ratio_median": pool.ratio_median,
            "ratio_max": pool.ratio_max,
            "n_farms": len(farm_ids),
            "n_days": int(report.eps_std.shape[0]),
        },
        "farms": farms_out,
        "diagnostics": {
            "capacity_rank_corr": diag["capacity_rank_corr"],
            "distance_rank_corr": diag["distance_rank_corr"],
            "mean_floor_hits": int(engine.floor_count),
        },
    }
    report_path = cfg.out(REPORT_FILE)
    ratios_path = cfg.out(RATIOS_FILE)
    io.write_json(payload, report_path)
    io.write_table(
        pd.DataFrame(
            [
                {k: row[k] for k in ("farm_id", "capacity_mw", "distance_km",
                                     "ratio")}
                for row in farms_out
            ]
        ),
        ratios_path,
    )
    return [report_path, ratios_path]


# -- stage table and runner --------------------------------------------------------


def _needs(cfg: RunConfig, *names: str) -> list[str]:
    return [cfg.out(name) for name in names]


STAGES = {
    "synth": (stage_synth, lambda cfg: []),
    "losses": (stage_losses, lambda cfg: [cfg.weather, cfg.farms]),
    "stationarize": (stage_stationarize,
                     lambda cfg: _needs(cfg, PANEL_RAW_FILE)),
    "fit-gaussian": (stage_fit_gaussian,
                     lambda cfg: _needs(cfg, LOSS_FILE, COVARIATE_FILE)),
    "score": (stage_score,
              lambda cfg: _needs(cfg, GAUSSIAN_MODELS_FILE, COVARIATE_FILE)),
    "filter": (stage_filter,
               lambda cfg: _needs(cfg, SCORE_SERIES_FILE, SCORE_SPEC_FILE,
                                  LOSS_FILE)),
    "fit-tweedie": (stage_fit_tweedie,
                    lambda cfg: _needs(cfg, FILTERED_FILE, COVARIATE_FILE)),
    "optimize": (stage_optimize,
                 lambda cfg: _needs(cfg, MODELS_FILE, COVARIATE_FILE,
                                    SCORE_SPEC_FILE)),
    "share": (stage_share,
              lambda cfg: _needs(cfg, LOSS_FILE, STATS_FILE, MODELS_FILE,
                                 SCENARIO_MODEL_FILE, INDEX_SPEC_FILE,
                                 INDEX_SERIES_FILE)),
    "report": (stage_report,
               lambda cfg: _needs(cfg, SHARING_FILE, INDEX_SPEC_FILE,
                                  MODELS_FILE, SCENARIO_MODEL_FILE) +
               [cfg.farms]),
}

# Which stage writes each artifact, for prerequisite diagnostics.
_PRODUCERS = {
    PANEL_RAW_FILE: "losses",
    LOSS_FILE: "stationarize",
    STATS_FILE: "stationarize",
    COVARIATE_FILE: "stationarize",
    GAUSSIAN_MODELS_FILE: "fit-gaussian",
    SCORE_SERIES_FILE: "score",
    SCORE_SPEC_FILE: "score",
    FILTERED_FILE: "filter",
    MODELS_FILE: "fit-tweedie",
    TWEEDIE_GRID_FILE: "fit-tweedie",
    SCENARIO_MODEL_FILE: "optimize",
    INDEX_SPEC_FILE: "optimize",
    INDEX_SERIES_FILE: "optimize",
    SHARING_FILE: "share",
}


def run_stage(stage: str, cfg: RunConfig) -> list[str]:
    """Run one named stage after checking its prerequisites exist."""
    if stage not in STAGES:
        raise SchemaError(
            f"unknown stage {stage!r}; expected one of {sorted(STAGES)}"
        )
    body, needs = STAGES[stage]
    for path in needs(cfg):
        if not os.path.exists(path):
            producer = _PRODUCERS.get(os.path.basename(path))
            hint = f"; run the {producer!r} stage first" if producer else ""
            raise MissingPrerequisiteError(
                f"stage {stage!r} needs {path}{hint}"
            )
    return body(cfg)


def run_all(cfg: RunConfig, stages=None) -> list[str]:
    """Run the configured stages (default: the full chain) in order."""
    written = []
    for stage in stages or list(STAGES):
        written.extend(run_stage(stage, cfg))
    return written


# -- validation --------------------------------------------------------------------


def _alignment_gaps(stamps: pd.DatetimeIndex) -> pd.DatetimeIndex:
    expected = pd.date_range(stamps.min(), stamps.max(), freq="h")
    return expected.difference(stamps)


def validate(cfg: RunConfig) -> dict:
    """Diagnostics for a configuration and its input files.

    Never raises: problems come back as entries in ``errors`` (fatal for
    a pipeline run) and ``warnings`` (survivable), plus a coverage
    summary. Schema violations are reported with the reader's row and
    column diagnostics.
    """
    errors: list[dict] = []
    warnings: list[dict] = []
    summary: dict = {}

    def fatal(message: str) -> None:
        errors.append({"severity": "fatal", "message": message})

    def warn(message: str) -> None:
        warnings.append({"severity": "warning", "message": message})

    farms = None
    if not os.path.exists(cfg.farms):
        fatal(f"farms file {cfg.farms} is missing")
    else:
        try:
            farms = io.read_farms(cfg.farms)
        except SchemaError as exc:
            fatal(str(exc))
    if farms is not None:
        summary["farms"] = len(farms)
        market_exposed = [f.farm_id for f in farms if f.scheme != "feedin"]
        if market_exposed and not os.path.exists(cfg.prices):
            fatal(
                f"price file {cfg.prices} is missing but farms "
                f"{market_exposed} settle on market prices"
            )

    prices = None
    if os.path.exists(cfg.prices):
        try:
            prices = io.read_prices(cfg.prices)
            summary["price_hours"] = int(prices.size)
        except SchemaError as exc:
            fatal(str(exc))

    weather = None
    if not os.path.exists(cfg.weather):
        fatal(f"weather file {cfg.weather} is missing")
    else:
        try:
            weather = io.read_weather(cfg.weather)
        except SchemaError as exc:
            fatal(str(exc))

    if weather is not None:
        locations = sorted(weather["location_id"].unique())
        summary["locations"] = len(locations)
        summary["weather_rows"] = int(len(weather))
        if cfg.reference_location not in locations:
            fatal(
                f"reference location {cfg.reference_location!r} has no "
                "weather rows"
            )
        if farms is not None:
            absent = [f.farm_id for f in farms if f.farm_id not in locations]
            if absent:
                fatal(f"farms {absent} have no weather rows")
        coverage: dict[str, dict] = {}
        for location in locations:
            stamps = pd.DatetimeIndex(
                weather.loc[weather["location_id"] == location, "timestamp"]
            ).sort_values()
            gaps = _alignment_gaps(stamps)
            if gaps.size:
                warn(
                    f"location {location!r}: {gaps.size} missing hours; "
                    f"first gap at {gaps[0].isoformat()}"
                )
            months = pd.Series(stamps.floor("D").unique()).dt.to_period("M")
            counts = months.value_counts()
            coverage[location] = {
                "months": int(counts.size),
                "min_days_in_month": int(counts.min()),
                "missing_hours": int(gaps.size),
            }
            thin = counts[counts < 2]
            if not thin.empty:
                warn(
                    f"location {location!r}: months {sorted(str(m) for m in thin.index)} "
                    "have under two days; their statistics will be degenerate"
                )
        summary["monthly_coverage"] = coverage
        if prices is not None:
            stamps = pd.DatetimeIndex(
                weather["timestamp"].unique()
            ).sort_values()
            uncovered = stamps.difference(prices.index)
            if uncovered.size:
                warn(
                    f"prices miss {uncovered.size} weather hours; first at "
                    f"{uncovered[0].isoformat()}"
                )
    return {"errors": errors, "warnings": warnings, "summary": summary}
