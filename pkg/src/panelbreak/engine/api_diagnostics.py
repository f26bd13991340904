import logging
import math
from typing import Annotated, Optional, Sequence

import numpy as np

from .api_panel import PanelDataset
from .api_regress import drop_collinear, exclusion_matrix, ols, residualize, wald
from .api_vecm import ModelSpec, VecmEstimate, lagged_difference_name
from .errors import InsufficientEntities, SeriesTooShort, ShapeMismatch, UnknownVariable
from .utils import TestReport, chi2_report, f_report, normal_report, parallel_map

logger = logging.getLogger(__name__)

DEFAULT_LM_MAX_LAG = 3
MIN_HOMOGENEITY_ENTITIES = 5

# ============================================================================
# Granger Causality / Block Exogeneity
# ============================================================================


def granger_block_exogeneity(
    est: Annotated[VecmEstimate, "Estimated VECM"],
    target: Annotated[Optional[str], "Equation under test; defaults to the dependent variable"] = None,
) -> list[TestReport]:
    """Wald tests that each other variable's lagged differences drop out of target's equation.

    The last report ("All") tests every excluded block jointly.
    """
    spec = est.spec
    target = spec.dependent if target is None else target
    if target not in spec.endogenous:
        raise UnknownVariable(f"{target!r} is not an endogenous variable")
    fit = est.fit_for(target)
    names = est.regressor_names

    reports = []
    joint: list[str] = []
    for v in spec.endogenous:
        if v == target:
            continue
        block = [lagged_difference_name(v, j) for j in range(1, spec.lag_order + 1)]
        joint += block
        report = wald(fit, exclusion_matrix(names, block), name=f"D({v})")
        reports.append(_with_extra(report, dependent=target, excluded=v))
    report = wald(fit, exclusion_matrix(names, joint), name="All")
    reports.append(_with_extra(report, dependent=target, excluded="All"))
    return reports


def _with_extra(report: TestReport, **extra) -> TestReport:
    return TestReport(
        report.name, report.statistic, report.distribution, report.df, report.p_value,
        report.alpha, report.components, {**report.extra, **extra},
    )


# ============================================================================
# Residual Serial Correlation
# ============================================================================


def lag_within_groups(U: np.ndarray, groups: np.ndarray, lag: int) -> np.ndarray:
    """U shifted down by lag inside each group, zero-filled at the group start.

    Rows of a group must be contiguous and in time order.
    """
    out = np.zeros_like(U)
    for g in np.unique(groups):
        rows = np.flatnonzero(groups == g)
        if rows.size > lag:
            out[rows[lag:]] = U[rows[:-lag]]
    return out


def _rao_f(ratio: float, n: int, k_orig: int, K: int, m: int) -> tuple[float, float, float]:
    """Rao's F approximation to the likelihood-ratio test of m added regressors per equation."""
    denom = K**2 + m**2 - 5
    num = K**2 * m**2 - 4
    r = math.sqrt(num / denom) if denom > 0 and num > 0 else 1.0
    q = 0.5 * K * m - 1.0
    N = n - k_orig - m - 0.5 * (K - m + 1)
    df1 = float(K * m)
    df2 = N * r - q
    statistic = (ratio ** (1.0 / r) - 1.0) * df2 / df1
    return statistic, df1, df2


def lm_statistics(
    U: Annotated[np.ndarray, "Residual matrix (n, K)"],
    X: Annotated[np.ndarray, "Original regressors (n, k)"],
    groups: Annotated[np.ndarray, "Entity label per row"],
    lags: Annotated[Sequence[int], "Residual lags added to the auxiliary regression"],
    name: str = "LM",
) -> TestReport:
    """Residual serial-correlation test on a system of residuals.

    The main statistic is the Edgeworth-corrected likelihood ratio (LRE);
    components hold Rao's F transform and the classic LM statistic.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    n, K = U.shape
    if X.shape[0] != n or groups.shape[0] != n:
        raise ShapeMismatch("residuals, design and groups must have the same number of rows")
    k_orig = X.shape[1]
    s = len(lags)
    m = K * s
    d = k_orig + m
    if n - d <= K:
        raise SeriesTooShort(f"{n} observations cannot support {d} regressors per auxiliary equation")

    lagged = np.column_stack([lag_within_groups(U, groups, h) for h in lags])
    E = residualize(U, np.column_stack([X, lagged]))
    sigma_u = U.T @ U / n
    sigma_e = E.T @ E / n
    _, logdet_u = np.linalg.slogdet(sigma_u)
    _, logdet_e = np.linalg.slogdet(sigma_e)
    log_ratio = logdet_u - logdet_e

    lm = n * (K - float(np.trace(np.linalg.solve(sigma_u, sigma_e))))
    lre = (n - d - 0.5) * log_ratio
    df = K**2 * s
    rao, df1, df2 = _rao_f(math.exp(log_ratio), n, k_orig, K, m)

    rao_report = f_report("Rao F", max(rao, 0.0), df1, df2)
    lm_report = chi2_report("LM", max(lm, 0.0), df)
    lre_report = chi2_report(name, max(lre, 0.0), df)
    return TestReport(
        name, lre_report.statistic, "chi2", lre_report.df, lre_report.p_value,
        components=(rao_report, lm_report),
        extra={"lags": list(lags)},
    )


def serial_correlation_lm(
    est: Annotated[VecmEstimate, "Estimated VECM"],
    max_lag: Annotated[int, "Highest residual lag tested"] = DEFAULT_LM_MAX_LAG,
    *,
    workers: int = 1,
) -> dict[str, list[TestReport]]:
    """Single-lag ("lag h") and cumulative ("lags 1 to h") tests for h = 1..max_lag."""
    if max_lag < 1:
        raise SeriesTooShort(f"max_lag must be >= 1, got {max_lag}")
    jobs = [("single", h, [h]) for h in range(1, max_lag + 1)]
    jobs += [("cumulative", h, list(range(1, h + 1))) for h in range(1, max_lag + 1)]

    def one(job):
        variant, h, lags = job
        return lm_statistics(est.residuals, est.design, est.groups, lags, name=f"{variant} {h}")

    reports = parallel_map(one, jobs, workers)
    return {
        "single": reports[:max_lag],
        "cumulative": reports[max_lag:],
    }


# ============================================================================
# Residual Heteroskedasticity
# ============================================================================


def component_labels(K: int) -> list[tuple[int, int]]:
    """Residual products in report order: squares first, then res_i*res_j for j < i."""
    pairs = [(i, i) for i in range(K)]
    pairs += [(i, j) for i in range(1, K) for j in range(i)]
    return pairs


def white_auxiliary(
    Z: np.ndarray, names: Sequence[str], cross_terms: bool = True
) -> tuple[np.ndarray, list[str]]:
    """Levels, squares and (optionally) pairwise products of the regressors, collinear columns dropped."""
    columns = [Z[:, j] for j in range(Z.shape[1])]
    labels = list(names)
    for j in range(Z.shape[1]):
        columns.append(Z[:, j] ** 2)
        labels.append(f"{names[j]}^2")
    if cross_terms:
        for i in range(Z.shape[1]):
            for j in range(i + 1, Z.shape[1]):
                columns.append(Z[:, i] * Z[:, j])
                labels.append(f"{names[i]}*{names[j]}")
    aux = np.column_stack([np.ones(Z.shape[0])] + columns)
    aux, kept, _ = drop_collinear(aux, ["const"] + labels)
    return aux, kept


def white_test(
    residuals: Annotated[np.ndarray, "Residual matrix (n, K)"],
    regressors: Annotated[np.ndarray, "Non-constant regressors (n, k)"],
    names: Optional[Sequence[str]] = None,
    cross_terms: bool = True,
) -> TestReport:
    U = np.asarray(residuals, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    Z = np.asarray(regressors, dtype=float)
    n, K = U.shape
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(Z.shape[1])]
    aux, kept = white_auxiliary(Z, names, cross_terms)
    q = aux.shape[1] - 1
    if n - q - 1 <= 0:
        raise SeriesTooShort(f"{n} observations for {q} auxiliary regressors")

    pairs = component_labels(K)
    products = np.column_stack([U[:, i] * U[:, j] for i, j in pairs])
    components = []
    for (i, j), y in zip(pairs, products.T):
        fit = ols(y, aux)
        r2 = fit.r_squared
        df2 = n - q - 1
        f_stat = (r2 / q) / ((1.0 - r2) / df2) if r2 < 1.0 else math.inf
        f_part = f_report("F", f_stat, q, df2)
        chi2_part = chi2_report(f"res{i + 1}*res{j + 1}", n * r2, q, r_squared=r2)
        components.append(
            TestReport(
                chi2_part.name, chi2_part.statistic, "chi2", chi2_part.df, chi2_part.p_value,
                components=(f_part,), extra=dict(chi2_part.extra),
            )
        )

    M = len(pairs)
    restricted = products - products.mean(axis=0)
    unrestricted = residualize(products, aux)
    omega_0 = restricted.T @ restricted / n
    omega_1 = unrestricted.T @ unrestricted / n
    statistic = n * (M - float(np.trace(np.linalg.lstsq(omega_0, omega_1, rcond=None)[0])))
    joint = chi2_report("Joint", max(statistic, 0.0), M * q)
    return TestReport(
        "Joint", joint.statistic, "chi2", joint.df, joint.p_value,
        components=tuple(components),
        extra={"auxiliary_regressors": q, "cross_terms": cross_terms, "auxiliary_names": kept[1:]},
    )


def heteroskedasticity_white(
    est: Annotated[VecmEstimate, "Estimated VECM"],
    cross_terms: Annotated[bool, "Include pairwise regressor products"] = True,
) -> TestReport:
    names = [n for n in est.regressor_names if n != "const"]
    cols = [est.regressor_names.index(n) for n in names]
    report = white_test(est.residuals, est.design[:, cols], names, cross_terms)
    logger.info(
        "White test: %d auxiliary regressors, %d components",
        report.extra["auxiliary_regressors"], len(report.components),
    )
    return report


# ============================================================================
# Slope Homogeneity
# ============================================================================


def slope_homogeneity(
    p: Annotated[PanelDataset, "Panel holding the long-run variables"],
    spec: Annotated[ModelSpec, "Model specification; the long-run equation is tested"],
    two_sided: Annotated[bool, "Two-sided normal p-values instead of right-tail"] = False,
) -> TestReport:
    """Dispersion of per-entity long-run slopes around the weighted pooled estimator.

    Entity constants and the policy dummies are partialled out entity by
    entity.  The adjusted statistic uses the smallest per-entity T.
    """
    p = p.canonical()
    regressors = list(spec.regressors)
    dummies = list(spec.exogenous_dummies)
    variables = [spec.dependent] + regressors + dummies
    for v in variables:
        p.variable_index(v)
    k = len(regressors)

    units = []
    for entity in p.entities:
        block = p.joint_run(entity, variables)
        if block is None:
            continue
        T = block.nobs
        nuisance = [np.ones(T)] + [block.column(d) for d in dummies if np.ptp(block.column(d)) > 0]
        Z = np.column_stack(nuisance)
        if T - Z.shape[1] <= k + 1:
            logger.info("Slope homogeneity: entity %s has %d observations; excluded", entity, T)
            continue
        X = residualize(np.column_stack([block.column(v) for v in regressors]), Z)
        y = residualize(block.column(spec.dependent), Z)
        units.append((entity, X, y, T, Z.shape[1]))
    N = len(units)
    if N < MIN_HOMOGENEITY_ENTITIES:
        raise InsufficientEntities(
            f"slope homogeneity needs at least {MIN_HOMOGENEITY_ENTITIES} usable entities, got {N}"
        )

    XX = [X.T @ X for _, X, _, _, _ in units]
    Xy = [X.T @ y for _, X, y, _, _ in units]
    beta_fe = np.linalg.solve(sum(XX), sum(Xy))
    sigma2 = []
    for _, X, y, T, z in units:
        e = y - X @ beta_fe
        sigma2.append(float(e @ e) / (T - z))
    w_xx = sum(a / s for a, s in zip(XX, sigma2))
    w_xy = sum(b / s for b, s in zip(Xy, sigma2))
    beta_wfe = np.linalg.solve(w_xx, w_xy)

    dispersion = 0.0
    for a, b, s in zip(XX, Xy, sigma2):
        diff = np.linalg.solve(a, b) - beta_wfe
        dispersion += float(diff @ a @ diff) / s
    T_min = min(T for _, _, _, T, _ in units)
    centred = dispersion / N - k
    delta = math.sqrt(N) * centred / math.sqrt(2.0 * k)
    delta_adj = math.sqrt(N) * centred / math.sqrt(2.0 * k * (T_min - k - 1) / (T_min + 1))

    tail = "two" if two_sided else "right"
    tilde = normal_report("Delta Tilde", delta, tail)
    adjusted = normal_report("Delta Adjusted", delta_adj, tail)
    return TestReport(
        "Slope homogeneity", adjusted.statistic, "normal", (), adjusted.p_value,
        components=(tilde, adjusted),
        extra={
            "tail": tail,
            "n_entities": N,
            "min_periods": T_min,
            "n_slopes": k,
            "dispersion": dispersion,
            "pooled_slopes": dict(zip(regressors, beta_wfe.tolist())),
        },
    )
