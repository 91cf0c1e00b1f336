"""Index-weight construction and optimization.

The chain: average the per-farm Gaussian coefficients into an initial
score, set the threshold as an empirical quantile, and refine the
weights by minimizing the pooled conditional loss variance on the tail.
Farm-level conditional means given the shared index are recovered from
each farm's own-score regression minus first- and second-order
correction terms, assembled from kernel moments of GLM-mean payloads on
a simulated scenario set (losses themselves are never simulated).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .exceptions import (
    DegenerateSampleError,
    EmptyFilterError,
    NumericalError,
    TailCollapseError,
)
from .glm import TweedieLossModel
from .kernels import DensityEval, KernelModel, nw_and_density, nw_regress

# Below this deviation magnitude the unit direction is undefined and the
# corrections are exactly zero (the zero-deviation limit of the expansion).
TAU_TOL = 1e-8

# Corrected conditional means are floored here before fractional powers.
MEAN_FLOOR = 1e-6

# A candidate whose tail evaluation floors more than this fraction of all
# (farm, grid node) means is infeasible: its objective value would measure
# the floor, not the basis risk, and such wholesale collapse only happens
# when the weights leave the small-deviation regime the expansion assumes.
FLOOR_REJECT_FRACTION = 0.5

# Tail evaluation grid for the objective: node count and upper quantile.
GRID_NODES = 64
GRID_UPPER_QUANTILE = 0.999

# Bandwidth factor for the own-score anchor regression. The payload has
# almost no spread around its conditional mean there, so a bandwidth well
# under Silverman's cuts smoothing bias without a noise penalty.
OWN_BANDWIDTH_FACTOR = 0.3

# The corrections run as two kernel sweeps on the index score. The
# first-order term needs conditional means and slopes, so its bandwidth
# decays near the Silverman rate, only slightly slower to tame slope
# noise deep in the tail; the second-order term needs curvatures, whose
# noise scales like h**-2.5, so that sweep keeps the Silverman constant
# but decays slower still. The larger smoothing bias of the wide sweeps
# is tolerable because the terms enter scaled by tau and tau**2/2.
SLOPE_BANDWIDTH_DECAY = 1.0 / 6.0
CURVATURE_BANDWIDTH_DECAY = 1.0 / 8.0

# Scenario rows used per candidate during basin hopping; the winning
# weights are re-scored on the full set before being accepted.
OPTIMIZER_SUBSAMPLE = 10_000

# Density below this is flagged as a thin-data region in ApproxTerms.
LOW_DENSITY_FLOOR = 1e-12

MIN_FILTERED_DAYS = 30


@dataclass(frozen=True)
class IndexSpec:
    """Final index definition: weights, threshold, and provenance."""

    weights: np.ndarray
    z0: float
    quantile: float = 0.8
    reference_location: str = ""
    seed: int | None = None
    objective_value: float | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or not np.all(np.isfinite(w)):
            raise ValueError("index weights must be a finite 1-d vector")
        if not np.any(w != 0.0):
            raise ValueError("index weights must not be identically zero")
        if not 0.0 < self.quantile < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "z0", float(self.z0))


def initial_score(fits, covariates):
    """Average per-farm coefficients and score the covariate rows.

    Returns (mean weights, score series covariates @ mean weights).
    """
    fits = list(fits)
    if not fits:
        raise ValueError("need at least one fitted model")
    coefs = np.vstack([np.asarray(f.coef_, dtype=float) for f in fits])
    a_bar = coefs.mean(axis=0)
    z = np.asarray(covariates, dtype=float) @ a_bar
    return a_bar, z


def threshold(series, quantile: float = 0.8) -> float:
    """Empirical quantile with linear interpolation between order stats."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 1 or series.size < 5:
        raise ValueError("threshold needs a 1-d series of at least 5 values")
    if not 0.0 < quantile < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")
    return float(np.quantile(series, quantile))


def filter_days(z, z0: float, min_days: int = MIN_FILTERED_DAYS) -> np.ndarray:
    """Boolean mask of days whose index value exceeds the threshold."""
    z = np.asarray(z, dtype=float)
    mask = z > z0
    kept = int(np.count_nonzero(mask))
    if kept < min_days:
        raise EmptyFilterError(
            f"only {kept} days exceed the threshold; need at least {min_days}"
        )
    return mask


def variance_from_mean(mean, dispersion: float, variance_power: float):
    """Conditional variance dispersion * mean**power, with the mean floored
    at MEAN_FLOOR before fractional powers are taken."""
    mean = np.asarray(mean, dtype=float)
    if variance_power == 0.0:
        return np.full(mean.shape, float(dispersion))
    return dispersion * np.maximum(mean, MEAN_FLOOR) ** variance_power


def correction_bandwidth(score, decay: float) -> float:
    """Bandwidth of a correction sweep on the index score."""
    score = np.asarray(score, dtype=float)
    sigma = float(np.std(score, ddof=1))
    if not sigma > 0.0:
        raise DegenerateSampleError("index score is degenerate")
    return 1.06 * sigma * score.size ** (-decay)


def _scenario_matrix(scenarios) -> np.ndarray:
    Y = scenarios.Y if hasattr(scenarios, "Y") else scenarios
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise ValueError("scenario matrix must be 2-d with at least two rows")
    return Y


class FarmIndexModel:
    """Farm-side bundle for index evaluation on one scenario set.

    Caches what does not depend on the candidate index weights: the
    fitted loss model, its score coefficients, the GLM mean over the
    scenario rows, and a kernel model on the farm's own score. The
    deviation direction and magnitude are recomputed per candidate.
    """

    def __init__(self, model, scenarios):
        Y = _scenario_matrix(scenarios)
        coef = np.asarray(model.coef_, dtype=float)
        if coef.shape != (Y.shape[1],):
            raise ValueError("model coefficients do not match scenario columns")
        self.model = model
        self.coefficients = coef
        self.variance_power = float(getattr(model, "q", 0.0))
        self.dispersion = float(
            model.phi_ if hasattr(model, "phi_") else model.resid_var_
        )
        if isinstance(model, TweedieLossModel):
            self.mean_payload = model.predict(Y, floor=model.predictor_floor)
        else:
            self.mean_payload = model.predict(Y)
        own = Y @ coef
        sigma = float(np.std(own, ddof=1))
        if sigma > 0.0:
            h = OWN_BANDWIDTH_FACTOR * sigma * own.size ** (-0.2)
            self.own_model = KernelModel(own, h=h, truncate=True)
        else:
            # Constant own score (all-zero coefficients): the GLM mean is
            # constant too, so its own-score regression is that constant.
            self.own_model = None

    def deviation(self, a):
        """Unit direction and magnitude of this farm's coefficients away
        from the reference weights; direction is None below TAU_TOL."""
        d = self.coefficients - np.asarray(a, dtype=float)
        tau = float(np.linalg.norm(d))
        if tau <= TAU_TOL:
            return None, tau
        return d / tau, tau


@dataclass(frozen=True)
class ApproxTerms:
    """Correction terms of one farm at the query points, with the
    intermediate conditional moments they were assembled from."""

    first_order: np.ndarray
    second_order: np.ndarray
    moments: dict = field(default_factory=dict)
    low_density: np.ndarray | None = None


@dataclass(frozen=True)
class _FarmEval:
    terms: ApproxTerms
    mean: np.ndarray
    variance: np.ndarray
    n_floored: int


class ScenarioIndexEngine:
    """Shared evaluation core: one scenario set, many candidate weights.

    Per candidate the engine builds a kernel model on the index score
    once and, in a single stacked sweep, estimates for every deviating
    farm the conditional moments of the payloads [G, W, W^2, GW, GW^2]
    (G the farm's GLM mean, W its unit deviation score). From those it
    assembles the correction terms, corrected conditional means, and
    conditional variances; the objective averages the variances over the
    tail of the scenario scores.
    """

    def __init__(self, scenarios, farms, quantile: float = 0.8,
                 threads: int | None = None):
        self.Y = _scenario_matrix(scenarios)
        self.farms = list(farms)
        if not self.farms:
            raise ValueError("need at least one farm")
        for farm in self.farms:
            if farm.coefficients.shape != (self.Y.shape[1],):
                raise ValueError("farm coefficients do not match scenario columns")
        if not 0.0 < quantile < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")
        self.quantile = float(quantile)
        self.threads = threads
        self.floor_count = 0

    # -- kernel sweeps ---------------------------------------------------

    def _sweep(self, index_model, z_eval, payload):
        threads = self.threads or 0
        if threads <= 1 or z_eval.size < 2 * threads:
            return nw_and_density(index_model, z_eval, payload)
        chunks = np.array_split(z_eval, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(
                pool.map(lambda c: nw_and_density(index_model, c, payload), chunks)
            )
        dens = DensityEval(
            np.concatenate([p[0].f for p in parts]),
            np.concatenate([p[0].df for p in parts]),
            np.concatenate([p[0].d2f for p in parts]),
        )
        triple = tuple(
            np.concatenate([p[1][k] for p in parts], axis=0) for k in range(3)
        )
        return dens, triple

    # -- per-candidate evaluation -----------------------------------------

    def _correction_terms(self, z_eval, a, devs) -> list[ApproxTerms]:
        """Sweep-based correction terms for every farm at the query points
        (exact zeros for farms whose coefficients equal the weights)."""
        score = self.Y @ np.asarray(a, dtype=float)
        active = [i for i, (alpha, _) in enumerate(devs) if alpha is not None]

        low = np.zeros(z_eval.shape, dtype=bool)
        terms: list[ApproxTerms | None] = [None] * len(self.farms)
        if active:
            model_s = KernelModel(
                score,
                h=correction_bandwidth(score, SLOPE_BANDWIDTH_DECAY),
                truncate=True,
            )
            model_c = KernelModel(
                score,
                h=correction_bandwidth(score, CURVATURE_BANDWIDTH_DECAY),
                truncate=True,
            )
            cols_s, cols_c = [], []
            for i in active:
                g = self.farms[i].mean_payload
                w = self.Y @ devs[i][0]
                cols_s.extend([g, w, g * w])
                cols_c.extend([g, w, w * w, g * w, g * w * w])
            dens_s, (gs, dgs, _) = self._sweep(
                model_s, z_eval, np.column_stack(cols_s)
            )
            dens_c, (gc, dgc, d2gc) = self._sweep(
                model_c, z_eval, np.column_stack(cols_c)
            )
            dlf_s = dens_s.dlogf()
            dlf_c = dens_c.dlogf()
            d2lf_c = dens_c.d2logf()
            low = dens_s.f < LOW_DENSITY_FLOOR
            for rank, i in enumerate(active):
                s3 = slice(3 * rank, 3 * rank + 3)
                s5 = slice(5 * rank, 5 * rank + 5)
                first, m_slope = _first_order_term(dlf_s, gs[:, s3], dgs[:, s3])
                second, m_curv = _second_order_term(
                    dlf_c, d2lf_c, gc[:, s5], dgc[:, s5], d2gc[:, s5]
                )
                terms[i] = ApproxTerms(
                    first, second, {**m_curv, **m_slope}, low
                )
        for i in range(len(self.farms)):
            if terms[i] is None:
                zero = np.zeros_like(z_eval)
                terms[i] = ApproxTerms(zero, zero.copy(), {}, low)
        return terms

    def _farm_eval(self, z_eval, a) -> list[_FarmEval]:
        a = np.asarray(a, dtype=float)
        z_eval = np.atleast_1d(np.asarray(z_eval, dtype=float))
        devs = [farm.deviation(a) for farm in self.farms]
        terms_all = self._correction_terms(z_eval, a, devs)

        out = []
        for i, farm in enumerate(self.farms):
            alpha_i, tau = devs[i]
            terms = terms_all[i]
            if farm.own_model is None:
                own = np.full(z_eval.shape, float(np.mean(farm.mean_payload)))
            else:
                own = nw_regress(farm.own_model, z_eval, farm.mean_payload)[0]
            if alpha_i is None:
                corrected = own
            else:
                corrected = (
                    own
                    - tau * terms.first_order
                    - 0.5 * tau * tau * terms.second_order
                )
            q = farm.variance_power
            if q == 0.0:
                n_floored = 0
            else:
                n_floored = int(np.count_nonzero(corrected < MEAN_FLOOR))
            variance = variance_from_mean(corrected, farm.dispersion, q)
            self.floor_count += n_floored
            out.append(_FarmEval(terms, corrected, variance, n_floored))
        return out

    # -- public per-farm views ---------------------------------------------

    def corrections(self, z_eval, a, farm: int = 0) -> ApproxTerms:
        z_eval = np.atleast_1d(np.asarray(z_eval, dtype=float))
        a = np.asarray(a, dtype=float)
        devs = [f.deviation(a) for f in self.farms]
        return self._correction_terms(z_eval, a, devs)[farm]

    def cond_mean(self, z_eval, a, farm: int = 0) -> np.ndarray:
        return self._farm_eval(z_eval, a)[farm].mean

    def cond_var(self, z_eval, a, farm: int = 0) -> np.ndarray:
        return self._farm_eval(z_eval, a)[farm].variance

    def moments(self, z_eval, a) -> tuple[np.ndarray, np.ndarray]:
        """Corrected conditional means and variances of every farm at the
        query points, stacked as two (n_farms, n_queries) arrays."""
        evals = self._farm_eval(z_eval, a)
        return (
            np.vstack([ev.mean for ev in evals]),
            np.vstack([ev.variance for ev in evals]),
        )

    # -- tail objective ------------------------------------------------------

    def objective(self, a, z0_rule="requantile") -> float:
        """Sum over farms of the mean conditional variance on the tail.

        The variances are evaluated on a fixed grid from the threshold to
        the GRID_UPPER_QUANTILE scenario quantile and interpolated at the
        tail scores, so cost stays flat in the scenario count.
        """
        a = np.asarray(a, dtype=float)
        score = self.Y @ a
        if z0_rule == "requantile":
            z0 = threshold(score, self.quantile)
        else:
            z0 = float(z0_rule)
        tail = score > z0
        if not np.any(tail):
            raise EmptyFilterError("no scenario rows above the threshold")
        upper = float(np.quantile(score, GRID_UPPER_QUANTILE))
        if upper > z0:
            grid = np.linspace(z0, upper, GRID_NODES)
        else:
            grid = np.array([z0])
        evals = self._farm_eval(grid, a)
        floored = sum(ev.n_floored for ev in evals)
        cells = grid.size * len(self.farms)
        if floored > FLOOR_REJECT_FRACTION * cells:
            raise TailCollapseError(
                f"{floored} of {cells} corrected tail means hit the "
                f"{MEAN_FLOOR} floor under these weights"
            )
        z_tail = score[tail]
        return float(
            sum(np.interp(z_tail, grid, ev.variance).mean() for ev in evals)
        )


def _first_order_term(dlf, g3, dg3):
    """First-order correction from the slope sweep of one farm.

    Columns of g3/dg3: conditional means (with query derivatives) of
    G, W, GW given the index score.
    """
    mean_loss, mean_dev, loss_dev = g3.T
    dmean_loss, dmean_dev, dloss_dev = dg3.T
    cov_ld = loss_dev - mean_loss * mean_dev
    dcov_ld = dloss_dev - dmean_loss * mean_dev - mean_loss * dmean_dev
    first = -dlf * cov_ld - dcov_ld - mean_dev * dmean_loss
    moments = {
        "dlogf": dlf,
        "mean_loss": mean_loss,
        "dmean_loss": dmean_loss,
        "mean_dev": mean_dev,
        "dmean_dev": dmean_dev,
        "cov_loss_dev": cov_ld,
        "dcov_loss_dev": dcov_ld,
    }
    return first, moments


def _second_order_term(dlf, d2lf, g5, dg5, d2g5):
    """Second-order correction from the curvature sweep of one farm.

    Columns of g5/dg5/d2g5: conditional means (with first and second
    query derivatives) of G, W, W^2, GW, GW^2 given the index score.
    The first-order term reappears inside; it is re-assembled here from
    the curvature sweep so the cancellations stay at one bandwidth.
    """
    mean_loss, mean_dev, mean_dev2, loss_dev, loss_dev2 = g5.T
    dmean_loss, dmean_dev, dmean_dev2, dloss_dev, dloss_dev2 = dg5.T
    d2mean_loss, _, d2mean_dev2, _, d2loss_dev2 = d2g5.T

    cov_ld = loss_dev - mean_loss * mean_dev
    dcov_ld = dloss_dev - dmean_loss * mean_dev - mean_loss * dmean_dev
    cov_ld2 = loss_dev2 - mean_loss * mean_dev2
    dcov_ld2 = dloss_dev2 - dmean_loss * mean_dev2 - mean_loss * dmean_dev2
    d2cov_ld2 = (
        d2loss_dev2
        - d2mean_loss * mean_dev2
        - 2.0 * dmean_loss * dmean_dev2
        - mean_loss * d2mean_dev2
    )

    first = -dlf * cov_ld - dcov_ld - mean_dev * dmean_loss
    second = (
        (d2lf + dlf**2) * cov_ld2
        + 2.0 * dlf * (dcov_ld2 + mean_dev2 * dmean_loss)
        + d2cov_ld2
        + 2.0 * dmean_dev2 * dmean_loss
        + mean_dev2 * d2mean_loss
        + 2.0 * (dlf * mean_dev + dmean_dev) * first
    )
    moments = {
        "d2logf": d2lf,
        "d2mean_loss": d2mean_loss,
        "mean_dev2": mean_dev2,
        "dmean_dev2": dmean_dev2,
        "d2mean_dev2": d2mean_dev2,
        "cov_loss_dev2": cov_ld2,
        "dcov_loss_dev2": dcov_ld2,
        "d2cov_loss_dev2": d2cov_ld2,
    }
    return second, moments


# -- free-function API over a throwaway engine --------------------------------

def corrections(z, a, farm: FarmIndexModel, scenarios) -> ApproxTerms:
    """First- and second-order correction terms of one farm at z."""
    return ScenarioIndexEngine(scenarios, [farm]).corrections(z, a)


def cond_mean_approx(z, a, farm: FarmIndexModel, scenarios) -> np.ndarray:
    """Corrected conditional mean of the farm loss given the index at z."""
    return ScenarioIndexEngine(scenarios, [farm]).cond_mean(z, a)


def cond_var_approx(z, a, farm: FarmIndexModel, scenarios) -> np.ndarray:
    """Conditional loss variance dispersion * corrected_mean**power at z."""
    return ScenarioIndexEngine(scenarios, [farm]).cond_var(z, a)


def objective(a, farms, scenarios, z0_rule="requantile") -> float:
    """Pooled tail variance of the given farms under candidate weights."""
    return ScenarioIndexEngine(scenarios, farms).objective(a, z0_rule)


def _safe_objective(engine: ScenarioIndexEngine, a) -> float:
    """Engine objective with numerical failures mapped to +inf so the
    optimizer can wander through degenerate candidates."""
    try:
        return engine.objective(a)
    except NumericalError:
        return math.inf


# -- optimization --------------------------------------------------------------

def basin_hopping(func, x0, seed=0, hops: int = 50, step: float = 0.25,
                  temperature: float = 1.0, minimizer_options: dict | None = None):
    """Global minimization by Nelder-Mead descents from perturbed starts.

    Each hop perturbs the Metropolis incumbent with a Gaussian step and
    descends; the move is accepted if it improves, or with probability
    exp(-increase/temperature) otherwise. The reported optimum only ever
    improves and stays exactly at x0 when no descent beats it.
    """
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(seed)
    options = {"xatol": 1e-6, "fatol": 1e-12}
    if minimizer_options:
        options.update(minimizer_options)

    def descend(start):
        # Infeasible points surface as math.inf, which Nelder-Mead handles
        # by design; its convergence test then subtracts inf from inf, so
        # silence that spurious invalid-value warning.
        with np.errstate(invalid="ignore"):
            res = minimize(func, start, method="Nelder-Mead", options=options)
        return np.asarray(res.x, dtype=float), float(res.fun)

    best_x, best_f = x0.copy(), float(func(x0))
    cur_x, cur_f = descend(x0)
    if cur_f < best_f:
        best_x, best_f = cur_x, cur_f
    for _ in range(hops):
        start = cur_x + step * rng.standard_normal(cur_x.size)
        loc_x, loc_f = descend(start)
        if loc_f < best_f:
            best_x, best_f = loc_x, loc_f
        if loc_f <= cur_f or rng.random() < math.exp(
            -min((loc_f - cur_f) / temperature, 700.0)
        ):
            cur_x, cur_f = loc_x, loc_f
    return best_x, best_f


def optimize(a0, farms, scenarios, quantile: float = 0.8, seed: int = 0,
             hops: int = 50, step: float = 0.25, temperature: float = 1.0,
             subsample: int = OPTIMIZER_SUBSAMPLE, reference_location: str = "",
             threads: int | None = None) -> IndexSpec:
    """Basin-hop the pooled tail variance over the index weights.

    Hops run on a fixed random subsample of the scenario set for speed;
    the hopped winner is then re-scored against the start on the full
    set and kept only if it strictly improves, so the result never
    degrades the starting weights.
    """
    a0 = np.asarray(a0, dtype=float)
    Y = _scenario_matrix(scenarios)
    farms = list(farms)
    seed_sub, seed_hop = np.random.SeedSequence(seed).spawn(2)

    if subsample < Y.shape[0]:
        idx = np.random.default_rng(seed_sub).choice(
            Y.shape[0], size=subsample, replace=False
        )
        y_small = Y[idx]
    else:
        y_small = Y
    small = ScenarioIndexEngine(
        y_small, [FarmIndexModel(f.model, y_small) for f in farms],
        quantile=quantile, threads=threads,
    )
    hop_budget = {"maxfev": 30 * a0.size, "xatol": 1e-4}
    best, best_small = basin_hopping(
        lambda a: _safe_objective(small, a), a0, seed=seed_hop, hops=hops,
        step=step, temperature=temperature, minimizer_options=hop_budget,
    )
    with np.errstate(invalid="ignore"):
        polish = minimize(
            lambda a: _safe_objective(small, a), best, method="Nelder-Mead",
            options={"maxfev": 100 * a0.size, "xatol": 1e-5, "fatol": 1e-12},
        )
    if float(polish.fun) < best_small:
        best = np.asarray(polish.x, dtype=float)

    full = ScenarioIndexEngine(Y, farms, quantile=quantile, threads=threads)
    f_start = _safe_objective(full, a0)
    f_best = _safe_objective(full, best)
    winner, value = (best, f_best) if f_best < f_start else (a0, f_start)
    return IndexSpec(
        weights=winner,
        z0=threshold(Y @ winner, quantile),
        quantile=quantile,
        reference_location=reference_location,
        seed=seed,
        objective_value=value,
    )
