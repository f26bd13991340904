import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Annotated, Any, Literal, Optional, Sequence

import numpy as np
from scipy import stats
from statsmodels.tsa.adfvalues import mackinnonp

from .api_panel import PanelDataset, SeriesView, first_difference
from .api_regress import (
    OlsFit,
    deterministic_terms,
    long_run_variance,
    ols,
    residualize,
)
from .errors import (
    InsufficientEntities,
    InvalidPValue,
    InvalidSpec,
    PanelError,
    RankDeficient,
    SeriesTooShort,
)
from .utils import (
    DETERMINISTIC_CHOICES,
    Deterministic,
    EntityStatistic,
    Exclusion,
    normal_p_value,
    parallel_map,
)

logger = logging.getLogger(__name__)

Method = Literal["LLC", "IPS", "ADF_FISHER", "PP_FISHER"]
METHODS: tuple[Method, ...] = ("LLC", "IPS", "ADF_FISHER", "PP_FISHER")

MIN_EFFECTIVE_OBS = 10
NULL_SIMULATION_SEED = 271828
DEFAULT_MOMENT_REPS = 4000

# statsmodels ships MacKinnon's (1994, 2010) response-surface coefficients;
# this maps our deterministic cases onto its regression codes.
_MACKINNON_REGRESSION = {"none": "n", "constant": "c", "constant_trend": "ct"}
DETERMINISTIC_CODE = {"none": 0, "constant": 1, "constant_trend": 2}

# Levin, Lin and Chu (2002), Table 2: mean and standard deviation adjustments
# for the pooled t-statistic, as tabulated in R's plm (adj.levinlin).
# Columns: T, then (mu*, sigma*) for no deterministics, constant, constant+trend.
_LLC_ADJUSTMENT = np.array(
    [
        [25, 0.004, 1.049, -0.554, 0.919, -0.703, 1.003],
        [30, 0.003, 1.035, -0.546, 0.889, -0.674, 0.949],
        [35, 0.002, 1.027, -0.541, 0.867, -0.653, 0.906],
        [40, 0.002, 1.021, -0.537, 0.850, -0.637, 0.871],
        [45, 0.001, 1.017, -0.533, 0.837, -0.624, 0.842],
        [50, 0.001, 1.014, -0.531, 0.826, -0.614, 0.818],
        [60, 0.001, 1.011, -0.527, 0.810, -0.598, 0.780],
        [70, 0.000, 1.008, -0.524, 0.798, -0.587, 0.751],
        [80, 0.000, 1.007, -0.521, 0.789, -0.578, 0.728],
        [90, 0.000, 1.006, -0.520, 0.782, -0.571, 0.710],
        [100, 0.000, 1.005, -0.518, 0.776, -0.566, 0.695],
        [250, 0.000, 1.001, -0.509, 0.742, -0.533, 0.603],
        [500, 0.000, 1.000, -0.504, 0.730, -0.526, 0.574],
    ]
)

# Im, Pesaran and Shin (2003), Table 3: mean and variance of the individual
# ADF t-ratio under the unit-root null, constant case, by augmentation lags.
# Rows: T, E[t], Var[t].  Lags without a row here, and the none and
# constant+trend cases, use the seeded null simulation.
_IPS_T_GRID = (10, 15, 20, 25, 30, 40, 50, 60, 70, 100)
_IPS_MOMENTS: dict[tuple[str, int], np.ndarray] = {
    ("constant", lags): np.column_stack([_IPS_T_GRID, means, variances])
    for lags, means, variances in (
        (
            0,
            (-1.504, -1.514, -1.522, -1.520, -1.526, -1.523, -1.527, -1.519, -1.524, -1.532),
            (1.069, 0.923, 0.851, 0.809, 0.789, 0.770, 0.760, 0.749, 0.736, 0.735),
        ),
        (
            1,
            (-1.488, -1.503, -1.516, -1.514, -1.519, -1.520, -1.524, -1.519, -1.522, -1.530),
            (1.171, 0.975, 0.883, 0.831, 0.804, 0.779, 0.767, 0.752, 0.745, 0.737),
        ),
        (
            2,
            (-1.319, -1.387, -1.428, -1.443, -1.460, -1.476, -1.493, -1.490, -1.498, -1.514),
            (1.423, 1.069, 0.963, 0.880, 0.850, 0.805, 0.786, 0.769, 0.757, 0.746),
        ),
        (
            3,
            (-1.306, -1.366, -1.413, -1.433, -1.453, -1.471, -1.489, -1.486, -1.495, -1.512),
            (1.527, 1.102, 0.979, 0.890, 0.860, 0.812, 0.790, 0.774, 0.762, 0.749),
        ),
        (
            4,
            (-1.171, -1.271, -1.333, -1.372, -1.400, -1.439, -1.461, -1.469, -1.481, -1.503),
            (1.938, 1.315, 1.148, 0.995, 0.935, 0.851, 0.821, 0.795, 0.778, 0.759),
        ),
    )
}


def _check_deterministic(deterministic: str) -> None:
    if deterministic not in DETERMINISTIC_CHOICES:
        raise InvalidSpec(
            f"deterministic must be one of {DETERMINISTIC_CHOICES}, got {deterministic!r}"
        )


# ============================================================================
# Single-Series Tests
# ============================================================================


@dataclass(frozen=True)
class AdfFit:
    statistic: float
    p_value: float
    lags: int
    nobs: int
    fit: OlsFit


def max_adf_lags(length: int, n_deterministic: int) -> int:
    """Schwarz search bound floor(12 (T/100)^(1/4)), shrunk to keep 10 free observations."""
    pmax = int(math.floor(12.0 * (length / 100.0) ** 0.25))
    while pmax > 0 and (length - 1 - pmax) - (1 + pmax + n_deterministic) < MIN_EFFECTIVE_OBS:
        pmax -= 1
    return pmax


def adf_design(
    y: np.ndarray, lags: int, deterministic: Deterministic, start: Optional[int] = None
) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Dependent vector and design of the augmented Dickey-Fuller regression.

    Column 0 is the lagged level.  start (>= lags) drops extra leading
    observations so that several lag orders can share one sample.
    """
    start = lags if start is None else start
    dy = np.diff(y)
    n = dy.shape[0] - start
    if n < MIN_EFFECTIVE_OBS:
        raise SeriesTooShort(
            f"ADF regression with {lags} lags leaves {n} observations (< {MIN_EFFECTIVE_OBS})"
        )
    columns = [y[start:-1]]
    names = ["y_lag"]
    for j in range(1, lags + 1):
        columns.append(dy[start - j: dy.shape[0] - j])
        names.append(f"dy_lag{j}")
    det = deterministic_terms(n, deterministic)
    names += ["const", "trend"][: det.shape[1]]
    X = np.column_stack(columns + [det]) if det.shape[1] else np.column_stack(columns)
    return dy[start:], X, names


def select_lags_sic(y: np.ndarray, deterministic: Deterministic, max_lags: Optional[int] = None) -> int:
    n_det = deterministic_terms(0, deterministic).shape[1]
    pmax = max_adf_lags(y.shape[0], n_det) if max_lags is None else max_lags
    best_lag, best_sic = 0, math.inf
    for lags in range(pmax + 1):
        dep, X, _ = adf_design(y, lags, deterministic, start=pmax)
        try:
            fit = ols(dep, X)
        except RankDeficient:
            continue
        n = fit.nobs
        sic = math.log(max(fit.ssr, 1e-300) / n) + X.shape[1] * math.log(n) / n
        if sic < best_sic:
            best_lag, best_sic = lags, sic
    return best_lag


def mackinnon_p_value(statistic: float, deterministic: Deterministic) -> float:
    return float(min(1.0, max(0.0, mackinnonp(statistic, regression=_MACKINNON_REGRESSION[deterministic], N=1))))


def adf_fit(
    s: SeriesView,
    deterministic: Deterministic = "constant",
    lags: Optional[int] = None,
) -> AdfFit:
    _check_deterministic(deterministic)
    y = s.data
    if lags is None:
        lags = select_lags_sic(y, deterministic)
        logger.debug("ADF %s/%s: SIC selected %d lags", s.entity, s.variable, lags)
    dep, X, names = adf_design(y, lags, deterministic)
    fit = ols(dep, X, names)
    statistic = float(fit.tvalues[0])
    return AdfFit(statistic, mackinnon_p_value(statistic, deterministic), lags, fit.nobs, fit)


def adf_stat(
    s: Annotated[SeriesView, "Series to test"],
    deterministic: Annotated[Deterministic, "Deterministic terms in the test regression"] = "constant",
    lags: Annotated[Optional[int], "Augmentation lags; None selects by SIC"] = None,
) -> tuple[float, float]:
    result = adf_fit(s, deterministic, lags)
    return result.statistic, result.p_value


def pp_stat(
    s: Annotated[SeriesView, "Series to test"],
    deterministic: Annotated[Deterministic, "Deterministic terms in the test regression"] = "constant",
    bandwidth: Annotated[Optional[int], "Bartlett bandwidth; None for automatic"] = None,
) -> tuple[float, float]:
    """Phillips-Perron Z_t from the unaugmented Dickey-Fuller regression."""
    _check_deterministic(deterministic)
    dep, X, names = adf_design(s.data, 0, deterministic)
    fit = ols(dep, X, names)
    u = fit.residuals
    n = fit.nobs
    gamma0 = float(u @ u) / n
    lam2 = long_run_variance(u, bandwidth, demean=False)
    lam = math.sqrt(lam2)
    t_ratio = float(fit.tvalues[0])
    se = float(fit.bse[0])
    statistic = math.sqrt(gamma0 / lam2) * t_ratio - 0.5 * ((lam2 - gamma0) / lam) * (n * se / math.sqrt(fit.sigma2))
    return statistic, mackinnon_p_value(statistic, deterministic)


def fisher_combine(
    per_entity_p: Annotated[Sequence[float], "Per-entity p-values in (0, 1]"],
) -> tuple[float, float]:
    ps = [float(p) for p in per_entity_p]
    if not ps:
        raise InvalidPValue("Fisher combination needs at least one p-value")
    for p in ps:
        if not (0.0 < p <= 1.0):
            raise InvalidPValue(f"p-value {p!r} outside (0, 1]")
    statistic = -2.0 * math.fsum(math.log(p) for p in ps)
    return statistic, float(stats.chi2.sf(statistic, 2 * len(ps)))


# ============================================================================
# Null Moments
# ============================================================================


def batch_adf_tstats(paths: np.ndarray, lags: int, deterministic: Deterministic) -> np.ndarray:
    """ADF t-ratios for many equal-length series at once (rows of paths)."""
    dy = np.diff(paths, axis=1)
    n = dy.shape[1] - lags
    cols = [paths[:, lags:-1]]
    for j in range(1, lags + 1):
        cols.append(dy[:, lags - j: dy.shape[1] - j])
    det = deterministic_terms(n, deterministic)
    for c in range(det.shape[1]):
        cols.append(np.broadcast_to(det[:, c], (paths.shape[0], n)))
    X = np.stack(cols, axis=2)
    y = dy[:, lags:]
    xtx = np.einsum("rnk,rnl->rkl", X, X)
    xty = np.einsum("rnk,rn->rk", X, y)
    beta = np.linalg.solve(xtx, xty[:, :, None])[:, :, 0]
    resid = y - np.einsum("rnk,rk->rn", X, beta)
    sigma2 = np.einsum("rn,rn->r", resid, resid) / (n - X.shape[2])
    var0 = np.linalg.inv(xtx)[:, 0, 0] * sigma2
    return beta[:, 0] / np.sqrt(var0)


@functools.lru_cache(maxsize=None)
def ips_null_moments(
    length: int, lags: int, deterministic: Deterministic, reps: int = DEFAULT_MOMENT_REPS
) -> tuple[float, float]:
    """Mean and variance of the ADF t-ratio for a Gaussian random walk.

    Produced by a seeded simulation keyed on (length, lags, deterministic),
    so the values are identical in every process.
    """
    seq = np.random.SeedSequence([NULL_SIMULATION_SEED, length, lags, DETERMINISTIC_CODE[deterministic]])
    rng = np.random.Generator(np.random.PCG64(seq))
    tstats = np.empty(reps)
    chunk = 1000
    for lo in range(0, reps, chunk):
        hi = min(reps, lo + chunk)
        paths = np.cumsum(rng.standard_normal((hi - lo, length)), axis=1)
        tstats[lo:hi] = batch_adf_tstats(paths, lags, deterministic)
    return float(tstats.mean()), float(tstats.var(ddof=1))


def ips_moments(length: int, lags: int, deterministic: Deterministic) -> tuple[float, float, str]:
    """E[t] and Var[t] for one entity, interpolated linearly in T from the table.

    The table is clamped at its first and last rows.  Cases it does not
    cover come from ips_null_moments at its default replication count.
    """
    table = _IPS_MOMENTS.get((deterministic, lags))
    if table is None:
        mean, var = ips_null_moments(length, lags, deterministic)
        return mean, var, "simulated"
    grid = table[:, 0]
    return float(np.interp(length, grid, table[:, 1])), float(np.interp(length, grid, table[:, 2])), "table"


def llc_adjustment(t_tilde: float, deterministic: Deterministic) -> tuple[float, float]:
    """Interpolate (mu*, sigma*) linearly in T, clamped to the tabulated range."""
    col = 1 + 2 * DETERMINISTIC_CODE[deterministic]
    grid = _LLC_ADJUSTMENT[:, 0]
    mu = float(np.interp(t_tilde, grid, _LLC_ADJUSTMENT[:, col]))
    sigma = float(np.interp(t_tilde, grid, _LLC_ADJUSTMENT[:, col + 1]))
    return mu, sigma


# ============================================================================
# Panel Tests
# ============================================================================


@dataclass(frozen=True)
class UnitRootResult:
    method: Method
    variable: str
    statistic: float
    p_value: float
    differenced: bool
    deterministic: Deterministic
    lags: tuple[int, ...]
    per_entity: Optional[tuple[EntityStatistic, ...]] = None
    exclusions: tuple[Exclusion, ...] = ()
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def reject(self) -> bool:
        return self.p_value < 0.05

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "variable": self.variable,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "differenced": self.differenced,
            "deterministic": self.deterministic,
            "lags": list(self.lags),
            "per_entity": list(self.per_entity) if self.per_entity is not None else None,
            "exclusions": list(self.exclusions),
            "extra": dict(self.extra),
        }


def default_deterministic(differenced: bool) -> Deterministic:
    return "none" if differenced else "constant"


def panel_series(
    p: PanelDataset, variable: str, differenced: bool
) -> tuple[list[SeriesView], list[Exclusion]]:
    """Longest observed run of each entity, differenced on request."""
    p = p.canonical()
    p.variable_index(variable)
    series: list[SeriesView] = []
    excluded: list[Exclusion] = []
    for entity in p.entities:
        s = p.longest_series(entity, variable)
        if s is None or len(s) < 2:
            excluded.append({"entity": entity, "reason": f"no usable run of {variable}"})
            continue
        series.append(first_difference(s) if differenced else s)
    return series, excluded


def _per_entity(
    series: list[SeriesView],
    excluded: list[Exclusion],
    func,
    workers: int,
) -> list[tuple[SeriesView, Any]]:
    def guarded(s: SeriesView):
        try:
            return func(s)
        except (SeriesTooShort, RankDeficient) as e:
            return e

    results = parallel_map(guarded, series, workers)
    kept = []
    for s, result in zip(series, results):
        if isinstance(result, PanelError):
            logger.info("Dropping entity %s from %s test: %s", s.entity, s.variable, result.message)
            excluded.append({"entity": s.entity, "reason": result.message})
        else:
            kept.append((s, result))
    return kept


def _require_entities(kept: list, method: str, variable: str) -> None:
    if len(kept) < 2:
        raise InsufficientEntities(f"{method} on {variable} needs at least 2 usable entities, have {len(kept)}")


def _llc_entity(s: SeriesView, deterministic: Deterministic) -> dict[str, Any]:
    y = s.data
    lags = select_lags_sic(y, deterministic)
    dep, X, _ = adf_design(y, lags, deterministic)
    nuisance = X[:, 1:]
    e = residualize(dep, nuisance)
    v = residualize(X[:, 0], nuisance)
    if float(v @ v) <= 0:
        raise RankDeficient(f"lagged level of {s.entity} is collinear with deterministics")
    slope = float(v @ e) / float(v @ v)
    eps = e - slope * v
    n = dep.shape[0]
    sigma_eps = math.sqrt(float(eps @ eps) / (n - 1))
    if sigma_eps <= 0:
        raise RankDeficient(f"zero innovation variance for {s.entity}")

    dy = np.diff(y)
    if deterministic != "none":
        dy = residualize(dy, deterministic_terms(dy.shape[0], deterministic))
    kernel_lags = min(int(math.floor(3.21 * len(y) ** (1.0 / 3.0))), dy.shape[0] - 1)
    sigma_y = math.sqrt(long_run_variance(dy, kernel_lags, demean=False))
    return {
        "e": e / sigma_eps,
        "v": v / sigma_eps,
        "ratio": sigma_y / sigma_eps,
        "lags": lags,
        "length": len(y),
        "nobs": n,
    }


def llc_test(
    p: Annotated[PanelDataset, "Panel to test"],
    variable: Annotated[str, "Variable name"],
    differenced: Annotated[bool, "Test first differences instead of levels"] = False,
    deterministic: Annotated[Optional[Deterministic], "Deterministic terms; None uses the default"] = None,
    *,
    workers: int = 1,
) -> UnitRootResult:
    """Levin-Lin-Chu pooled adjusted t* (common unit root)."""
    deterministic = deterministic or default_deterministic(differenced)
    _check_deterministic(deterministic)
    series, excluded = panel_series(p, variable, differenced)
    kept = _per_entity(series, excluded, lambda s: _llc_entity(s, deterministic), workers)
    _require_entities(kept, "LLC", variable)

    parts = [r for _, r in kept]
    E = np.concatenate([r["e"] for r in parts])
    V = np.concatenate([r["v"] for r in parts])
    n_entities = len(parts)
    vv = float(V @ V)
    delta = float(V @ E) / vv
    t_bar = float(np.mean([r["length"] for r in parts]))
    p_bar = float(np.mean([r["lags"] for r in parts]))
    t_tilde = t_bar - p_bar - 1.0
    resid = E - delta * V
    sigma2 = float(resid @ resid) / (n_entities * t_tilde)
    std_delta = math.sqrt(sigma2 / vv)
    t_delta = delta / std_delta
    s_n = float(np.mean([r["ratio"] for r in parts]))
    mu, sigma = llc_adjustment(t_tilde, deterministic)
    t_star = (t_delta - n_entities * t_tilde * s_n * std_delta / sigma2 * mu) / sigma

    return UnitRootResult(
        method="LLC",
        variable=variable,
        statistic=t_star,
        p_value=normal_p_value(t_star, "left"),
        differenced=differenced,
        deterministic=deterministic,
        lags=tuple(r["lags"] for r in parts),
        exclusions=tuple(excluded),
        extra={"delta": delta, "t_delta": t_delta, "t_tilde": t_tilde, "s_n": s_n},
    )


def ips_test(
    p: Annotated[PanelDataset, "Panel to test"],
    variable: Annotated[str, "Variable name"],
    differenced: Annotated[bool, "Test first differences instead of levels"] = False,
    deterministic: Annotated[Optional[Deterministic], "Deterministic terms; None uses the default"] = None,
    *,
    workers: int = 1,
) -> UnitRootResult:
    """Im-Pesaran-Shin W-t-bar (individual unit roots)."""
    deterministic = deterministic or default_deterministic(differenced)
    _check_deterministic(deterministic)
    series, excluded = panel_series(p, variable, differenced)
    kept = _per_entity(series, excluded, lambda s: adf_fit(s, deterministic), workers)
    _require_entities(kept, "IPS", variable)

    tstats = np.array([fit.statistic for _, fit in kept])
    moments = [ips_moments(len(s), fit.lags, deterministic) for s, fit in kept]
    mean_e = float(np.mean([m[0] for m in moments]))
    mean_v = float(np.mean([m[1] for m in moments]))
    n_entities = len(kept)
    t_bar = float(tstats.mean())
    w = math.sqrt(n_entities) * (t_bar - mean_e) / math.sqrt(mean_v)

    per_entity = tuple(
        EntityStatistic(entity=s.entity, statistic=fit.statistic, p_value=fit.p_value, lags=fit.lags, nobs=fit.nobs)
        for s, fit in kept
    )
    return UnitRootResult(
        method="IPS",
        variable=variable,
        statistic=w,
        p_value=normal_p_value(w, "left"),
        differenced=differenced,
        deterministic=deterministic,
        lags=tuple(fit.lags for _, fit in kept),
        per_entity=per_entity,
        exclusions=tuple(excluded),
        extra={
            "t_bar": t_bar,
            "moment_source": "table" if all(m[2] == "table" for m in moments) else "simulated",
        },
    )


_P_FLOOR = 1e-300


def _fisher_result(
    method: Method,
    variable: str,
    differenced: bool,
    deterministic: Deterministic,
    entries: list[EntityStatistic],
    excluded: list[Exclusion],
) -> UnitRootResult:
    if len(entries) < 2:
        raise InsufficientEntities(f"{method} on {variable} needs at least 2 usable entities, have {len(entries)}")
    ps = [max(float(e["p_value"] or 0.0), _P_FLOOR) for e in entries]
    statistic, p_value = fisher_combine(ps)
    return UnitRootResult(
        method=method,
        variable=variable,
        statistic=statistic,
        p_value=p_value,
        differenced=differenced,
        deterministic=deterministic,
        lags=tuple(e["lags"] for e in entries),
        per_entity=tuple(entries),
        exclusions=tuple(excluded),
    )


def adf_fisher_test(
    p: Annotated[PanelDataset, "Panel to test"],
    variable: Annotated[str, "Variable name"],
    differenced: Annotated[bool, "Test first differences instead of levels"] = False,
    deterministic: Annotated[Optional[Deterministic], "Deterministic terms; None uses the default"] = None,
    *,
    workers: int = 1,
) -> UnitRootResult:
    deterministic = deterministic or default_deterministic(differenced)
    _check_deterministic(deterministic)
    series, excluded = panel_series(p, variable, differenced)
    kept = _per_entity(series, excluded, lambda s: adf_fit(s, deterministic), workers)
    entries = [
        EntityStatistic(entity=s.entity, statistic=fit.statistic, p_value=fit.p_value, lags=fit.lags, nobs=fit.nobs)
        for s, fit in kept
    ]
    return _fisher_result("ADF_FISHER", variable, differenced, deterministic, entries, excluded)


def pp_fisher_test(
    p: Annotated[PanelDataset, "Panel to test"],
    variable: Annotated[str, "Variable name"],
    differenced: Annotated[bool, "Test first differences instead of levels"] = False,
    deterministic: Annotated[Optional[Deterministic], "Deterministic terms; None uses the default"] = None,
    *,
    workers: int = 1,
) -> UnitRootResult:
    deterministic = deterministic or default_deterministic(differenced)
    _check_deterministic(deterministic)
    series, excluded = panel_series(p, variable, differenced)
    kept = _per_entity(series, excluded, lambda s: pp_stat(s, deterministic), workers)
    entries = [
        EntityStatistic(entity=s.entity, statistic=stat, p_value=pv, lags=0, nobs=len(s) - 1)
        for s, (stat, pv) in kept
    ]
    return _fisher_result("PP_FISHER", variable, differenced, deterministic, entries, excluded)


def unit_root_battery(
    p: PanelDataset,
    variable: str,
    differenced: bool,
    deterministic: Optional[Deterministic] = None,
    *,
    workers: int = 1,
) -> list[UnitRootResult]:
    """All four methods on one variable, in report order."""
    return [
        llc_test(p, variable, differenced, deterministic, workers=workers),
        ips_test(p, variable, differenced, deterministic, workers=workers),
        adf_fisher_test(p, variable, differenced, deterministic, workers=workers),
        pp_fisher_test(p, variable, differenced, deterministic, workers=workers),
    ]
