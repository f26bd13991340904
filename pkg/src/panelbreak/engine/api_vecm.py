import logging
import math
from dataclasses import dataclass, field
from typing import Annotated, Any, Literal, Optional, Sequence

import numpy as np
from scipy import linalg

from .api_panel import PanelDataset, RunBlock
from .api_regress import (
    OlsFit,
    andrews_bandwidth,
    ols,
    panel_hac_covariance,
    residualize,
)
from .errors import InsufficientData, InvalidSpec, RankDeficient, ShapeMismatch
from .utils import Exclusion, parallel_map

logger = logging.getLogger(__name__)

CANONICAL_VARIABLES: tuple[str, ...] = ("co2", "energy_use", "gdp", "population")
DEFAULT_DUMMY = "paris_2015"
ESTIMATORS = ("two_step", "reduced_rank")
MIN_OBS_PER_COEFFICIENT = 30

Estimator = Literal["two_step", "reduced_rank"]

# ============================================================================
# Model Specification
# ============================================================================


@dataclass(frozen=True)
class ModelSpec:
    endogenous: tuple[str, ...] = CANONICAL_VARIABLES
    exogenous_dummies: tuple[str, ...] = (DEFAULT_DUMMY,)
    lag_order: int = 2
    rank: int = 1
    deterministic: Literal["constant"] = "constant"
    ordering: Optional[tuple[str, ...]] = None
    estimator: Estimator = "two_step"
    long_run_covariance: Literal["hac", "ols"] = "hac"

    def __post_init__(self):
        endogenous = tuple(self.endogenous)
        dummies = tuple(self.exogenous_dummies)
        ordering = tuple(self.ordering) if self.ordering is not None else endogenous
        object.__setattr__(self, "endogenous", endogenous)
        object.__setattr__(self, "exogenous_dummies", dummies)
        object.__setattr__(self, "ordering", ordering)

        k = len(endogenous)
        if k < 2 or len(set(endogenous)) != k:
            raise InvalidSpec("need at least two distinct endogenous variables")
        if not (1 <= self.rank < k):
            raise InvalidSpec(f"cointegrating rank must satisfy 1 <= r < K={k}, got r={self.rank}")
        if self.lag_order < 1:
            raise InvalidSpec(f"lag order must be >= 1, got {self.lag_order}")
        if sorted(ordering) != sorted(endogenous):
            raise InvalidSpec(f"ordering {list(ordering)} is not a permutation of {list(endogenous)}")
        if set(dummies) & set(endogenous):
            raise InvalidSpec("a dummy cannot also be endogenous")
        if self.deterministic != "constant":
            raise InvalidSpec(f"unsupported deterministic specification {self.deterministic!r}")
        if self.estimator not in ESTIMATORS:
            raise InvalidSpec(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.estimator == "two_step" and self.rank != 1:
            raise InvalidSpec("the two-step estimator identifies a single vector; use reduced_rank for r > 1")
        if self.long_run_covariance not in ("hac", "ols"):
            raise InvalidSpec(f"unknown long-run covariance {self.long_run_covariance!r}")

    @property
    def n_endogenous(self) -> int:
        return len(self.endogenous)

    @property
    def dependent(self) -> str:
        return self.endogenous[0]

    @property
    def regressors(self) -> tuple[str, ...]:
        return self.endogenous[1:]


# ============================================================================
# Cointegrating Vectors
# ============================================================================


@dataclass(frozen=True)
class CointegratingVector:
    """One long-run relation, stored in regression form.

    dependent = const + sum(coefficients[x] * x) + sum(coefficients[d] * d) + ECT.
    The normalized form (dependent coefficient 1, everything else negated)
    is derived on demand, so its leading coefficient is exactly 1.
    """

    variables: tuple[str, ...]
    dependent: str
    coefficients: dict[str, float]
    se: dict[str, float]
    entity_intercepts: dict[str, float] = field(default_factory=dict)
    dropped: tuple[str, ...] = ()
    nobs: int = 0
    estimator: str = "two_step"
    covariance_type: str = "ols"

    @property
    def constant(self) -> float:
        return self.coefficients.get("const", 0.0)

    @property
    def normalized(self) -> np.ndarray:
        """Coefficients on the endogenous levels with the dependent at +1."""
        out = np.zeros(len(self.variables))
        for i, name in enumerate(self.variables):
            if name == self.dependent:
                out[i] = 1.0
            elif name in self.coefficients:
                out[i] = -self.coefficients[name]
        return out

    def normalized_terms(self) -> dict[str, float]:
        """Every term of the normalized equation: levels, then const and dummies."""
        terms = {name: float(v) for name, v in zip(self.variables, self.normalized)}
        for name, value in self.coefficients.items():
            if name not in terms:
                terms[name] = -value
        return terms

    def t_ratio(self, name: str, normalized: bool = True) -> float:
        se = self.se.get(name, math.nan)
        value = self.coefficients.get(name, math.nan)
        if not se or math.isnan(se):
            return math.nan
        return (-value if normalized else value) / se

    def fitted_intercept(self, entity: str) -> float:
        return self.entity_intercepts.get(entity, self.constant)

    def to_dict(self) -> dict[str, Any]:
        return {
            "dependent": self.dependent,
            "variables": list(self.variables),
            "regression_form": dict(self.coefficients),
            "normalized_form": self.normalized_terms(),
            "se": dict(self.se),
            "dropped": list(self.dropped),
            "nobs": self.nobs,
            "estimator": self.estimator,
            "covariance_type": self.covariance_type,
        }


def _entity_blocks(
    p: PanelDataset, variables: Sequence[str], min_length: int, purpose: str
) -> tuple[list[RunBlock], list[Exclusion]]:
    for v in variables:
        p.variable_index(v)
    blocks: list[RunBlock] = []
    excluded: list[Exclusion] = []
    for entity in p.entities:
        block = p.joint_run(entity, variables)
        length = 0 if block is None else block.nobs
        if length < min_length:
            reason = f"{length} joint observations for {purpose} (< {min_length})"
            logger.info("Excluding entity %s: %s", entity, reason)
            excluded.append({"entity": entity, "reason": reason})
            continue
        blocks.append(block)
    return blocks, excluded


def estimate_long_run(
    p: Annotated[PanelDataset, "Panel holding endogenous variables and dummies"],
    spec: Annotated[ModelSpec, "Model specification"],
) -> CointegratingVector:
    """Pooled entity-demeaned OLS of the dependent level on the other levels and dummies."""
    p = p.canonical()
    regressors = list(spec.regressors) + list(spec.exogenous_dummies)
    variables = [spec.dependent] + regressors
    n_coef = len(regressors) + 1
    blocks, _ = _entity_blocks(p, variables, n_coef + 2, "long-run regression")

    ys, xs, groups, raw = [], [], [], []
    for g, block in enumerate(blocks):
        y = block.column(spec.dependent)
        X = np.column_stack([block.column(v) for v in regressors])
        raw.append((block.entity, y, X))
        ys.append(y - y.mean())
        xs.append(X - X.mean(axis=0))
        groups.append(np.full(y.shape[0], g))
    if not ys:
        raise InsufficientData("no entity has enough observations for the long-run regression")
    Y = np.concatenate(ys)
    X = np.vstack(xs)
    G = np.concatenate(groups)
    n = Y.shape[0]
    if n < MIN_OBS_PER_COEFFICIENT * n_coef:
        raise InsufficientData(
            f"long-run regression has {n} pooled observations, needs {MIN_OBS_PER_COEFFICIENT * n_coef}"
        )

    dropped = []
    keep = []
    for j, name in enumerate(regressors):
        if name in spec.exogenous_dummies and np.all(np.abs(X[:, j]) < 1e-12):
            logger.info("Dummy %s has no within-entity variation; dropped as collinear", name)
            dropped.append(name)
        else:
            keep.append(j)
    names = [regressors[j] for j in keep]
    fit = ols(Y, X[:, keep], names)

    n_groups = len(blocks)
    if spec.long_run_covariance == "hac":
        bandwidth = andrews_bandwidth(fit.residuals, G)
        cov = panel_hac_covariance(X[:, keep], fit.residuals, G, bandwidth)
        cov_type = f"panel Newey-West (Bartlett, bandwidth {bandwidth})"
    else:
        cov = fit.covariance * fit.df_resid / max(fit.df_resid - n_groups, 1)
        cov_type = "ols"
    fit = fit.with_covariance(cov)
    beta = dict(zip(names, fit.coefficients.tolist()))
    se = dict(zip(names, fit.bse.tolist()))

    intercepts: dict[str, float] = {}
    weights = []
    slope = np.array([beta.get(v, 0.0) for v in regressors])
    for entity, y, Xr in raw:
        intercepts[entity] = float(y.mean() - Xr.mean(axis=0) @ slope)
        weights.append(y.shape[0])
    x_bar = np.concatenate([Xr for _, _, Xr in raw])[:, keep].mean(axis=0)
    coefficients = {"const": float(np.average(list(intercepts.values()), weights=weights))}
    coefficients.update(beta)
    for name in dropped:
        coefficients[name] = 0.0
        se[name] = math.nan
    se["const"] = math.sqrt(max(float(x_bar @ cov @ x_bar) + fit.sigma2 / n, 0.0))

    return CointegratingVector(
        variables=spec.endogenous,
        dependent=spec.dependent,
        coefficients=coefficients,
        se=se,
        entity_intercepts=intercepts,
        dropped=tuple(dropped),
        nobs=n,
        estimator="two_step",
        covariance_type=cov_type,
    )


def _vecm_rows(block: RunBlock, spec: ModelSpec) -> dict[str, np.ndarray]:
    """Align differences, lagged differences and dummies for one entity."""
    p = spec.lag_order
    Y = np.column_stack([block.column(v) for v in spec.endogenous])
    dY = np.diff(Y, axis=0)
    t = dY.shape[0]
    lagged = [dY[p - j: t - j] for j in range(1, p + 1)]
    dummies = (
        np.column_stack([block.column(d)[p + 1:] for d in spec.exogenous_dummies])
        if spec.exogenous_dummies
        else np.empty((t - p, 0))
    )
    return {
        "dY": dY[p:],
        "Y_lag": Y[p:-1],
        "lagged": lagged,
        "dummies": dummies,
        "years": block.first_year + p + 1 + np.arange(t - p),
    }


def estimate_reduced_rank(
    p: Annotated[PanelDataset, "Panel holding endogenous variables and dummies"],
    spec: Annotated[ModelSpec, "Model specification"],
) -> tuple[CointegratingVector, ...]:
    """Pooled reduced-rank regression for the cointegrating space.

    Entity constants are removed by within-demeaning; lagged differences and
    dummies are concentrated out before the generalized eigenproblem.
    """
    p = p.canonical()
    variables = list(spec.endogenous) + list(spec.exogenous_dummies)
    blocks, _ = _entity_blocks(p, variables, spec.lag_order + 3, "reduced-rank regression")
    if not blocks:
        raise InsufficientData("no entity has enough observations for reduced-rank regression")

    z0, z1, z2 = [], [], []
    for block in blocks:
        rows = _vecm_rows(block, spec)
        short = np.column_stack(rows["lagged"] + [rows["dummies"]])
        z0.append(rows["dY"] - rows["dY"].mean(axis=0))
        z1.append(rows["Y_lag"] - rows["Y_lag"].mean(axis=0))
        z2.append(short - short.mean(axis=0))
    Z0, Z1, Z2 = np.vstack(z0), np.vstack(z1), np.vstack(z2)
    keep = np.linalg.norm(Z2, axis=0) > 1e-12
    R0 = residualize(Z0, Z2[:, keep])
    R1 = residualize(Z1, Z2[:, keep])
    n = R0.shape[0]
    S00 = R0.T @ R0 / n
    S01 = R0.T @ R1 / n
    S11 = R1.T @ R1 / n
    try:
        eigvals, eigvecs = linalg.eigh(S01.T @ linalg.solve(S00, S01, assume_a="pos"), S11)
    except linalg.LinAlgError as e:
        raise RankDeficient(f"reduced-rank eigenproblem failed: {e}")
    r = spec.rank
    B = eigvecs[:, ::-1][:, :r]
    lead = B[:r, :r]
    if abs(np.linalg.det(lead)) < 1e-12:
        raise RankDeficient("cannot normalize cointegrating vectors on the leading variables")
    B = B @ np.linalg.inv(lead)
    logger.debug("reduced-rank eigenvalues %s", eigvals[::-1][:r])

    vectors = []
    for i in range(r):
        dependent = spec.endogenous[i]
        coefficients: dict[str, float] = {}
        for j in range(r, spec.n_endogenous):
            coefficients[spec.endogenous[j]] = float(-B[j, i])
        intercepts = {}
        weights = []
        for block in blocks:
            levels = np.column_stack([block.column(v) for v in spec.endogenous])
            intercepts[block.entity] = float(np.mean(levels @ B[:, i]))
            weights.append(block.nobs)
        coefficients = {"const": float(np.average(list(intercepts.values()), weights=weights)), **coefficients}
        vectors.append(
            CointegratingVector(
                variables=spec.endogenous,
                dependent=dependent,
                coefficients=coefficients,
                se={name: math.nan for name in coefficients},
                entity_intercepts=intercepts,
                nobs=n,
                estimator="reduced_rank",
                covariance_type="not estimated",
            )
        )
    return tuple(vectors)


def build_ect(
    p: Annotated[PanelDataset, "Panel holding the vector's variables"],
    beta: Annotated[CointegratingVector, "Long-run relation"],
    name: str = "ect",
) -> PanelDataset:
    """Add the deviation from the long-run relation as a derived variable."""
    p = p.canonical()
    ect = p.get(beta.dependent).copy()
    observed = p.observed(beta.dependent).copy()
    for term, coefficient in beta.coefficients.items():
        if term == "const":
            continue
        data = p.get(term)
        observed &= p.observed(term)
        ect = ect - coefficient * np.where(np.isfinite(data), data, 0.0)
    intercepts = np.array([beta.fitted_intercept(e) for e in p.entities])
    ect = np.where(observed, ect - intercepts[:, None], np.nan)
    return p.with_variable(name, ect, observed)


# ============================================================================
# Short-Run System
# ============================================================================


@dataclass(frozen=True)
class VecmEstimate:
    spec: ModelSpec
    beta: tuple[CointegratingVector, ...]
    alpha: np.ndarray  # (K, r)
    gamma: tuple[np.ndarray, ...]  # p blocks of (K, K)
    constant: np.ndarray  # (K,)
    dummy_coefficients: np.ndarray  # (K, n_dummies), NaN where dropped
    fits: tuple[OlsFit, ...]
    residuals: np.ndarray  # (nobs, K)
    sigma: np.ndarray
    design: np.ndarray
    regressor_names: tuple[str, ...]
    groups: np.ndarray
    years: np.ndarray
    entities: tuple[str, ...]
    dropped_regressors: tuple[str, ...] = ()
    exclusions: tuple[Exclusion, ...] = ()

    @property
    def nobs(self) -> int:
        return self.residuals.shape[0]

    @property
    def beta_matrix(self) -> np.ndarray:
        return np.column_stack([b.normalized for b in self.beta])

    def fit_for(self, variable: str) -> OlsFit:
        return self.fits[self.spec.endogenous.index(variable)]


def lagged_difference_name(variable: str, lag: int) -> str:
    return f"d_{variable}_l{lag}"


def ect_name(i: int) -> str:
    return f"ect{i + 1}"


def estimate_vecm(
    p: Annotated[PanelDataset, "Panel holding endogenous variables and dummies"],
    spec: Annotated[ModelSpec, "Model specification"],
    beta: Annotated[CointegratingVector | Sequence[CointegratingVector], "Long-run relation(s)"],
    *,
    workers: int = 1,
) -> VecmEstimate:
    """Pooled OLS of each first difference on lagged ECTs, lagged differences, constant and dummies."""
    betas = (beta,) if isinstance(beta, CointegratingVector) else tuple(beta)
    if len(betas) != spec.rank:
        raise ShapeMismatch(f"{len(betas)} cointegrating vectors for rank {spec.rank}")
    p = p.canonical()
    ect_names = [ect_name(i) for i in range(len(betas))]
    for name, b in zip(ect_names, betas):
        p = build_ect(p, b, name)

    lags = spec.lag_order
    variables = list(spec.endogenous) + list(spec.exogenous_dummies) + ect_names
    blocks, excluded = _entity_blocks(p, variables, lags + 3, "short-run system")
    if not blocks:
        raise InsufficientData("no entity has enough observations for the short-run system")

    names = list(ect_names)
    for v in spec.endogenous:
        names += [lagged_difference_name(v, j) for j in range(1, lags + 1)]
    names += ["const"] + list(spec.exogenous_dummies)

    deps, rows, groups, years = [], [], [], []
    for g, block in enumerate(blocks):
        aligned = _vecm_rows(block, spec)
        n_i = aligned["dY"].shape[0]
        ects = [block.column(name)[lags:-1] for name in ect_names]
        lagged_cols = []
        for k in range(spec.n_endogenous):
            lagged_cols += [aligned["lagged"][j - 1][:, k] for j in range(1, lags + 1)]
        X_i = np.column_stack(ects + lagged_cols + [np.ones(n_i), aligned["dummies"]])
        deps.append(aligned["dY"])
        rows.append(X_i)
        groups.append(np.full(n_i, g))
        years.append(aligned["years"])
    dY = np.vstack(deps)
    X = np.vstack(rows)

    dropped = []
    keep = []
    for j, name in enumerate(names):
        col = X[:, j]
        if name in spec.exogenous_dummies and (np.all(col == 0) or np.all(col == 1)):
            logger.info("Dummy %s is constant over the short-run sample; dropped", name)
            dropped.append(name)
        else:
            keep.append(j)
    X = X[:, keep]
    kept_names = [names[j] for j in keep]

    fits = tuple(
        parallel_map(lambda k: ols(dY[:, k], X, kept_names), range(spec.n_endogenous), workers)
    )
    K = spec.n_endogenous
    coef = np.column_stack([f.coefficients for f in fits]).T  # (K, m)

    def column(name: str) -> np.ndarray:
        if name in kept_names:
            return coef[:, kept_names.index(name)]
        return np.full(K, np.nan)

    alpha = np.column_stack([column(n) for n in ect_names])
    gamma = tuple(
        np.column_stack([column(lagged_difference_name(v, j)) for v in spec.endogenous])
        for j in range(1, lags + 1)
    )
    dummy_coefficients = (
        np.column_stack([column(d) for d in spec.exogenous_dummies])
        if spec.exogenous_dummies
        else np.empty((K, 0))
    )
    residuals = np.column_stack([f.residuals for f in fits])
    sigma = residuals.T @ residuals / (X.shape[0] - X.shape[1])

    return VecmEstimate(
        spec=spec,
        beta=betas,
        alpha=alpha,
        gamma=gamma,
        constant=column("const"),
        dummy_coefficients=dummy_coefficients,
        fits=fits,
        residuals=residuals,
        sigma=0.5 * (sigma + sigma.T),
        design=X,
        regressor_names=tuple(kept_names),
        groups=np.concatenate(groups),
        years=np.concatenate(years),
        entities=tuple(b.entity for b in blocks),
        dropped_regressors=tuple(dropped),
        exclusions=tuple(excluded),
    )


def estimate_long_run_relations(p: PanelDataset, spec: ModelSpec) -> tuple[CointegratingVector, ...]:
    """Dispatch on the configured estimator."""
    if spec.estimator == "reduced_rank":
        return estimate_reduced_rank(p, spec)
    return (estimate_long_run(p, spec),)


def to_levels_var(est: VecmEstimate, spec: Optional[ModelSpec] = None) -> list[np.ndarray]:
    """Levels VAR(p+1) coefficient matrices implied by the VECM."""
    return vecm_to_var(est.alpha, est.beta_matrix, est.gamma)


def vecm_to_var(
    alpha: np.ndarray, beta: np.ndarray, gamma: Sequence[np.ndarray]
) -> list[np.ndarray]:
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    K = alpha.shape[0]
    if alpha.shape[1] != beta.shape[1] or beta.shape[0] != K:
        raise ShapeMismatch(f"alpha {alpha.shape} and beta {beta.shape} are not conformable")
    gamma = [np.asarray(g, dtype=float).reshape(K, K) for g in gamma]
    pi = alpha @ beta.T
    if not gamma:
        return [np.eye(K) + pi]
    A = [np.eye(K) + pi + gamma[0]]
    for j in range(1, len(gamma)):
        A.append(gamma[j] - gamma[j - 1])
    A.append(-gamma[-1])
    return A
