"""Pedroni residual-based panel cointegration tests.

Within-dimension ("panel") statistics pool numerators and denominators
across entities before forming the ratio; between-dimension ("group")
statistics average the per-entity ratios.  Every raw statistic is
standardized as (Z - mu * sqrt(N)) / sqrt(nu).

The adjustment moments (mu, nu) come either from a seeded simulation of
the statistic's per-entity ingredients under the null of no cointegration,
computed at the panel's own T and regressor count, or from the embedded
published constants.  Requesting published constants for a case that is
not embedded is a configuration error.
"""

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Annotated, Any, Literal, Mapping, Optional

import numpy as np

from .api_panel import PanelDataset
from .api_regress import deterministic_terms, long_run_variance, ols, residualize
from .api_unit_root import (
    NULL_SIMULATION_SEED,
    DETERMINISTIC_CODE,
    adf_design,
    select_lags_sic,
)
from .api_vecm import ModelSpec
from .errors import InsufficientData, InsufficientEntities, InvalidSpec, PanelError, RankDeficient
from .utils import Deterministic, Exclusion, normal_p_value, parallel_map

logger = logging.getLogger(__name__)

PEDRONI_STATISTICS: tuple[str, ...] = (
    "panel_v",
    "panel_rho",
    "panel_pp",
    "panel_adf",
    "group_rho",
    "group_pp",
    "group_adf",
)
PEDRONI_LABELS = {
    "panel_v": "Panel v-Statistic",
    "panel_rho": "Panel rho-Statistic",
    "panel_pp": "Panel PP-Statistic",
    "panel_adf": "Panel ADF-Statistic",
    "group_rho": "Group rho-Statistic",
    "group_pp": "Group PP-Statistic",
    "group_adf": "Group ADF-Statistic",
}
MAJORITY = 4
DEFAULT_MOMENT_REPS = 4000

MomentSource = Literal["simulated", "published"]

# Pedroni (1999), Table 2, standard case (constant), one regressor: (mu, nu).
_PUBLISHED_MOMENTS: dict[tuple[int, str], dict[str, tuple[float, float]]] = {
    (1, "constant"): {
        "panel_v": (8.62, 60.75),
        "panel_rho": (-6.02, 31.27),
        "panel_pp": (-1.73, 0.93),
        "panel_adf": (-1.73, 0.93),
        "group_rho": (-9.05, 35.98),
        "group_pp": (-2.03, 0.66),
        "group_adf": (-2.03, 0.66),
    },
}
PUBLISHED_MOMENT_CASES = frozenset(_PUBLISHED_MOMENTS)

# ============================================================================
# First Stage
# ============================================================================


@dataclass(frozen=True)
class CointegratingResiduals:
    residuals: dict[str, np.ndarray]
    long_run_weights: dict[str, float]
    n_regressors: int
    deterministic: Deterministic
    regressors: tuple[str, ...]
    exclusions: tuple[Exclusion, ...] = ()


def _entity_first_stage(
    y: np.ndarray, X: np.ndarray, shifts: np.ndarray, deterministic: Deterministic
) -> tuple[np.ndarray, float]:
    n = y.shape[0]
    design = np.column_stack([X, shifts, deterministic_terms(n, deterministic)])
    residuals = ols(y, design).residuals
    eta = residualize(np.diff(y), np.diff(X, axis=0))
    return residuals, long_run_variance(eta, None, demean=False)


def entity_cointegrating_residuals(
    p: Annotated[PanelDataset, "Panel holding endogenous variables and dummies"],
    spec: Annotated[ModelSpec, "Model specification"],
    *,
    deterministic: Deterministic = "constant",
    count_dummy: bool = False,
    workers: int = 1,
) -> CointegratingResiduals:
    """Per-entity OLS of the dependent level on the regressors, dummies and deterministics.

    Dummies always enter as level shifts; count_dummy decides whether they
    count as regressors when the adjustment moments are looked up.
    """
    p = p.canonical()
    regressors = spec.regressors
    dummies = spec.exogenous_dummies
    variables = [spec.dependent, *regressors, *dummies]
    n_det = deterministic_terms(0, deterministic).shape[1]
    min_length = len(regressors) + len(dummies) + n_det + 5

    def one(entity: str):
        block = p.joint_run(entity, variables)
        length = 0 if block is None else block.nobs
        if length < min_length:
            raise InsufficientData(f"{length} observations (< {min_length})")
        y = block.column(spec.dependent)
        X = np.column_stack([block.column(v) for v in regressors])
        shift_cols = [block.column(d) for d in dummies if np.ptp(block.column(d)) > 0]
        shifts = np.column_stack(shift_cols) if shift_cols else np.empty((length, 0))
        return _entity_first_stage(y, X, shifts, deterministic)

    def guarded(entity: str):
        try:
            return one(entity)
        except (InsufficientData, RankDeficient) as e:
            return e

    residuals: dict[str, np.ndarray] = {}
    weights: dict[str, float] = {}
    excluded: list[Exclusion] = []
    for entity, result in zip(p.entities, parallel_map(guarded, p.entities, workers)):
        if isinstance(result, PanelError):
            logger.info("Excluding entity %s from cointegration stage: %s", entity, result.message)
            excluded.append({"entity": entity, "reason": result.message})
            continue
        residuals[entity], weights[entity] = result

    return CointegratingResiduals(
        residuals=residuals,
        long_run_weights=weights,
        n_regressors=len(regressors) + (len(dummies) if count_dummy else 0),
        deterministic=deterministic,
        regressors=tuple(regressors) + (tuple(dummies) if count_dummy else ()),
        exclusions=tuple(excluded),
    )


# ============================================================================
# Per-Entity Ingredients
# ============================================================================


def pedroni_entity_terms(
    e: np.ndarray, l11_sq: float = 1.0, bandwidth: Optional[int] = None
) -> dict[str, float]:
    """Numerators, denominators and group ratios contributed by one entity."""
    e = np.asarray(e, dtype=float)
    n1 = e.shape[0] - 1
    e_lag, e_cur = e[:-1], e[1:]
    de = np.diff(e)
    B = float(e_lag @ e_lag)
    if B <= 0:
        raise RankDeficient("residual series is identically zero")
    rho = float(e_lag @ e_cur) / B
    mu = e_cur - rho * e_lag
    s2 = float(mu @ mu) / n1
    sigma2 = long_run_variance(mu, bandwidth, demean=False)
    lam = 0.5 * (sigma2 - s2)
    A = float(e_lag @ de) - n1 * lam

    lags = select_lags_sic(e, "none")
    dep, X, _ = adf_design(e, lags, "none")
    v = residualize(X[:, 0], X[:, 1:])
    u = residualize(dep, X[:, 1:])
    vv = float(v @ v)
    vu = float(v @ u)
    n_adf = dep.shape[0]
    adf_resid = u - (vu / vv) * v
    s_star = float(adf_resid @ adf_resid) / n_adf

    w = 1.0 / l11_sq
    return {
        "a": w * A / n1,
        "b": w * B / n1**2,
        "c": w * sigma2,
        "a_star": w * vu / n_adf,
        "b_star": w * vv / n_adf**2,
        "s_star": s_star,
        "group_rho": n1 * A / B,
        "group_pp": A / math.sqrt(sigma2 * B),
        "group_adf": vu / math.sqrt(s_star * vv),
        "lags": float(lags),
        "length": float(e.shape[0]),
    }


def _raw_statistics(terms: list[dict[str, float]]) -> dict[str, float]:
    n = len(terms)
    root_n = math.sqrt(n)

    def mean(key: str) -> float:
        return math.fsum(t[key] for t in terms) / n

    a, b, c = mean("a"), mean("b"), mean("c")
    a_s, b_s, s_s = mean("a_star"), mean("b_star"), mean("s_star")
    return {
        "panel_v": root_n / b,
        "panel_rho": root_n * a / b,
        "panel_pp": root_n * a / math.sqrt(c * b),
        "panel_adf": root_n * a_s / math.sqrt(s_s * b_s),
        "group_rho": root_n * mean("group_rho"),
        "group_pp": root_n * mean("group_pp"),
        "group_adf": root_n * mean("group_adf"),
    }


# ============================================================================
# Adjustment Moments
# ============================================================================


def _ratio_moments(draws: np.ndarray, value: float, gradient: np.ndarray) -> tuple[float, float]:
    cov = np.atleast_2d(np.cov(draws, rowvar=False))
    return value, float(gradient @ cov @ gradient)


@functools.lru_cache(maxsize=None)
def pedroni_null_moments(
    length: int, n_regressors: int, deterministic: Deterministic, reps: int = DEFAULT_MOMENT_REPS
) -> dict[str, tuple[float, float]]:
    """(mu, nu) for each statistic from independent random walks of the given length."""
    seq = np.random.SeedSequence(
        [NULL_SIMULATION_SEED, length, n_regressors, DETERMINISTIC_CODE[deterministic], 7]
    )
    rng = np.random.Generator(np.random.PCG64(seq))
    rows = []
    while len(rows) < reps:
        walks = np.cumsum(rng.standard_normal((length, n_regressors + 1)), axis=0)
        try:
            e, l11 = _entity_first_stage(
                walks[:, 0], walks[:, 1:], np.empty((length, 0)), deterministic
            )
            rows.append(pedroni_entity_terms(e, l11))
        except PanelError:
            continue

    def col(key: str) -> np.ndarray:
        return np.array([r[key] for r in rows])

    moments: dict[str, tuple[float, float]] = {}
    b = col("b")
    eb = b.mean()
    moments["panel_v"] = (1.0 / eb, float(b.var(ddof=1)) / eb**4)

    a = col("a")
    ea = a.mean()
    moments["panel_rho"] = _ratio_moments(
        np.column_stack([a, b]), ea / eb, np.array([1.0 / eb, -ea / eb**2])
    )

    for name, (ka, kb, kc) in {
        "panel_pp": ("a", "b", "c"),
        "panel_adf": ("a_star", "b_star", "s_star"),
    }.items():
        xa, xb, xc = col(ka), col(kb), col(kc)
        ma, mb, mc = xa.mean(), xb.mean(), xc.mean()
        root = math.sqrt(mc * mb)
        gradient = np.array([1.0 / root, -ma / (2.0 * mb * root), -ma / (2.0 * mc * root)])
        moments[name] = _ratio_moments(np.column_stack([xa, xb, xc]), ma / root, gradient)

    for name in ("group_rho", "group_pp", "group_adf"):
        g = col(name)
        moments[name] = (float(g.mean()), float(g.var(ddof=1)))
    return moments


def adjustment_moments(
    length: int,
    n_regressors: int,
    deterministic: Deterministic,
    source: MomentSource = "simulated",
    reps: int = DEFAULT_MOMENT_REPS,
) -> tuple[dict[str, tuple[float, float]], str]:
    if source == "published":
        table = _PUBLISHED_MOMENTS.get((n_regressors, deterministic))
        if table is None:
            raise InvalidSpec(
                f"no published Pedroni moments for {n_regressors} regressors ({deterministic}); "
                f"embedded cases: {sorted(PUBLISHED_MOMENT_CASES)}"
            )
        return table, "published"
    if source != "simulated":
        raise InvalidSpec(f"unknown moment source {source!r}")
    return pedroni_null_moments(length, n_regressors, deterministic, reps), f"simulated (T={length}, reps={reps})"


# ============================================================================
# Test
# ============================================================================


@dataclass(frozen=True)
class PedroniStatistic:
    raw: float
    statistic: float
    p_value: float

    @property
    def reject(self) -> bool:
        return self.p_value < 0.05


@dataclass(frozen=True)
class PedroniResult:
    statistics: dict[str, PedroniStatistic]
    n_regressors: int
    deterministic: Deterministic
    regressors: tuple[str, ...] = ()
    moment_source: str = ""
    n_entities: int = 0
    exclusions: tuple[Exclusion, ...] = ()
    per_entity_lags: dict[str, int] = field(default_factory=dict)

    @property
    def rejections(self) -> int:
        return sum(1 for s in self.statistics.values() if s.reject)

    @property
    def decision(self) -> bool:
        """True when a majority (at least four of seven) reject no cointegration."""
        return self.rejections >= MAJORITY

    def to_dict(self) -> dict[str, Any]:
        return {
            "statistics": {
                name: {"raw": s.raw, "statistic": s.statistic, "p_value": s.p_value, "reject": s.reject}
                for name, s in self.statistics.items()
            },
            "decision": self.decision,
            "rejections": self.rejections,
            "n_regressors": self.n_regressors,
            "deterministic": self.deterministic,
            "regressors": list(self.regressors),
            "moment_source": self.moment_source,
            "n_entities": self.n_entities,
            "exclusions": list(self.exclusions),
            "per_entity_lags": dict(self.per_entity_lags),
        }


def pedroni_tests(
    residuals: Annotated[
        CointegratingResiduals | Mapping[str, np.ndarray], "First-stage residuals per entity"
    ],
    *,
    long_run_weights: Optional[Mapping[str, float]] = None,
    n_regressors: Optional[int] = None,
    deterministic: Deterministic = "constant",
    moments: MomentSource = "simulated",
    moment_reps: int = DEFAULT_MOMENT_REPS,
    workers: int = 1,
) -> PedroniResult:
    regressors: tuple[str, ...] = ()
    exclusions: tuple[Exclusion, ...] = ()
    if isinstance(residuals, CointegratingResiduals):
        long_run_weights = residuals.long_run_weights if long_run_weights is None else long_run_weights
        n_regressors = residuals.n_regressors if n_regressors is None else n_regressors
        deterministic = residuals.deterministic
        regressors = residuals.regressors
        exclusions = residuals.exclusions
        residuals = residuals.residuals
    if n_regressors is None:
        raise InsufficientData("number of first-stage regressors is required")

    entities = sorted(residuals)
    if len(entities) < 2:
        raise InsufficientEntities(f"Pedroni tests need at least 2 entities, have {len(entities)}")
    weights = long_run_weights or {}
    terms = parallel_map(
        lambda e: pedroni_entity_terms(residuals[e], weights.get(e, 1.0)), entities, workers
    )
    raw = _raw_statistics(terms)

    length = int(round(float(np.median([t["length"] for t in terms]))))
    table, source = adjustment_moments(length, n_regressors, deterministic, moments, moment_reps)
    root_n = math.sqrt(len(entities))
    statistics = {}
    for name in PEDRONI_STATISTICS:
        mu, nu = table[name]
        standardized = (raw[name] - mu * root_n) / math.sqrt(nu)
        tail = "right" if name == "panel_v" else "left"
        statistics[name] = PedroniStatistic(raw[name], standardized, normal_p_value(standardized, tail))

    return PedroniResult(
        statistics=statistics,
        n_regressors=n_regressors,
        deterministic=deterministic,
        regressors=regressors,
        moment_source=source,
        n_entities=len(entities),
        exclusions=exclusions,
        per_entity_lags={e: int(t["lags"]) for e, t in zip(entities, terms)},
    )
