import logging
import math
from dataclasses import dataclass
from typing import Annotated, Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import (
    InsufficientData,
    InvalidSpec,
    RankDeficient,
    SeriesTooShort,
    ShapeMismatch,
    SingularRestriction,
    ValidationError,
)
from .utils import Deterministic, TestReport, chi2_report

logger = logging.getLogger(__name__)

DEFAULT_COND_LIMIT = 1e12
LRV_FLOOR = 1e-12

# ============================================================================
# Least Squares
# ============================================================================


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    sigma2: float
    nobs: int
    df_resid: int
    r_squared: float
    names: tuple[str, ...] = ()

    @property
    def bse(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def tvalues(self) -> np.ndarray:
        se = self.bse
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, self.coefficients / se, np.nan)

    @property
    def ssr(self) -> float:
        return float(self.residuals @ self.residuals)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"no coefficient named {name!r}")

    def with_covariance(self, covariance: np.ndarray) -> "OlsFit":
        return OlsFit(
            self.coefficients, covariance, self.residuals, self.sigma2,
            self.nobs, self.df_resid, self.r_squared, self.names,
        )


def _has_constant(X: np.ndarray) -> bool:
    for col in X.T:
        if col[0] != 0 and np.all(col == col[0]):
            return True
    return False


def ols(
    y: Annotated[np.ndarray, "Dependent variable (n,)"],
    X: Annotated[np.ndarray, "Design matrix (n, k)"],
    names: Optional[Sequence[str]] = None,
    *,
    cond_limit: float = DEFAULT_COND_LIMIT,
) -> OlsFit:
    """Least squares by QR decomposition.

    Raises RankDeficient when the design's condition number exceeds
    cond_limit instead of returning amplified noise.
    """
    y = np.asarray(y, dtype=float).reshape(-1)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if n != y.shape[0]:
        raise ShapeMismatch(f"design has {n} rows but y has {y.shape[0]}")
    if k == 0:
        raise ShapeMismatch("design matrix has no columns")
    if n <= k:
        raise InsufficientData(f"{n} observations for {k} coefficients")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite values in regression data")

    q, r = linalg.qr(X, mode="economic")
    singular_values = linalg.svdvals(r)
    cond = math.inf if singular_values[-1] == 0 else singular_values[0] / singular_values[-1]
    if cond > cond_limit:
        raise RankDeficient(f"design condition number {cond:.3g} exceeds {cond_limit:.0e}")
    logger.debug("ols n=%d k=%d cond=%.3g", n, k, cond)

    beta = linalg.solve_triangular(r, q.T @ y)
    residuals = y - X @ beta
    ssr = float(residuals @ residuals)
    df_resid = n - k
    sigma2 = ssr / df_resid
    r_inv = linalg.solve_triangular(r, np.eye(k))
    covariance = sigma2 * (r_inv @ r_inv.T)
    covariance = 0.5 * (covariance + covariance.T)

    if _has_constant(X):
        tss = float(np.sum((y - y.mean()) ** 2))
    else:
        tss = float(y @ y)
    r_squared = 0.0 if tss <= 0 else min(1.0, max(0.0, 1.0 - ssr / tss))

    return OlsFit(
        coefficients=beta,
        covariance=covariance,
        residuals=residuals,
        sigma2=sigma2,
        nobs=n,
        df_resid=df_resid,
        r_squared=r_squared,
        names=tuple(names) if names is not None else tuple(f"x{i}" for i in range(k)),
    )


def residualize(y: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Residuals of y (vector or matrix) after projecting on the columns of Z."""
    y = np.asarray(y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[1] == 0:
        return y.copy()
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    return y - Z @ coef


def drop_collinear(
    X: np.ndarray, names: Sequence[str], tol: float = 1e-9
) -> tuple[np.ndarray, list[str], list[str]]:
    """Remove columns that are linear combinations of earlier-pivoted ones.

    Columns are scaled to unit norm before the pivoted QR so that squares of
    large-valued regressors are not mistaken for dependence.
    """
    X = np.asarray(X, dtype=float)
    norms = np.linalg.norm(X, axis=0)
    nonzero = norms > 0
    scaled = X[:, nonzero] / norms[nonzero]
    candidates = np.flatnonzero(nonzero)
    _, r, piv = linalg.qr(scaled, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * diag[0])) if diag.size else 0
    keep = sorted(candidates[piv[:rank]].tolist())
    dropped = [names[i] for i in range(X.shape[1]) if i not in keep]
    if dropped:
        logger.info("Dropped collinear columns: %s", ", ".join(dropped))
    return X[:, keep], [names[i] for i in keep], dropped


def deterministic_terms(n: int, deterministic: Deterministic) -> np.ndarray:
    if deterministic == "none":
        return np.empty((n, 0))
    if deterministic == "constant":
        return np.ones((n, 1))
    if deterministic == "constant_trend":
        return np.column_stack([np.ones(n), np.arange(1, n + 1, dtype=float)])
    raise InvalidSpec(f"unknown deterministic specification {deterministic!r}")


# ============================================================================
# Wald Tests
# ============================================================================


def wald(
    fit: OlsFit,
    R: Annotated[np.ndarray, "Restriction matrix (q, k)"],
    r: Annotated[Optional[np.ndarray], "Restriction values (q,), default zeros"] = None,
    name: str = "Wald",
) -> TestReport:
    R = np.atleast_2d(np.asarray(R, dtype=float))
    k = fit.coefficients.shape[0]
    if R.shape[1] != k:
        raise ShapeMismatch(f"restriction matrix has {R.shape[1]} columns, model has {k}")
    q = R.shape[0]
    r = np.zeros(q) if r is None else np.asarray(r, dtype=float).reshape(-1)
    if r.shape[0] != q:
        raise ShapeMismatch(f"{q} restrictions but {r.shape[0]} values")
    if np.linalg.matrix_rank(R) < q:
        raise SingularRestriction("restriction matrix is not of full row rank")

    diff = R @ fit.coefficients - r
    V = R @ fit.covariance @ R.T
    try:
        statistic = float(diff @ linalg.solve(V, diff, assume_a="sym"))
    except (linalg.LinAlgError, ValueError):
        raise SingularRestriction("restricted covariance R Cov R' is singular")
    return chi2_report(name, max(statistic, 0.0), q)


def exclusion_matrix(names: Sequence[str], excluded: Sequence[str]) -> np.ndarray:
    """Rows selecting each excluded coefficient, for zero-restriction tests."""
    R = np.zeros((len(excluded), len(names)))
    for row, name in enumerate(excluded):
        R[row, list(names).index(name)] = 1.0
    return R


# ============================================================================
# Long-Run Variance
# ============================================================================


def newey_west_bandwidth(nobs: int) -> int:
    return int(math.floor(4.0 * (nobs / 100.0) ** (2.0 / 9.0)))


def long_run_variance(
    u: Annotated[np.ndarray, "Series whose long-run variance is estimated"],
    bandwidth: Annotated[Optional[int], "Bartlett truncation lag; None for automatic"] = None,
    *,
    demean: bool = True,
) -> float:
    u = np.asarray(u, dtype=float).reshape(-1)
    nobs = u.shape[0]
    lags = newey_west_bandwidth(nobs) if bandwidth is None else int(bandwidth)
    if lags < 0:
        raise InvalidSpec(f"bandwidth must be non-negative, got {lags}")
    if nobs <= lags or nobs == 0:
        raise SeriesTooShort(f"long-run variance with bandwidth {lags} needs more than {lags} points")
    if demean:
        u = u - u.mean()
    total = float(u @ u) / nobs
    for j in range(1, lags + 1):
        weight = 1.0 - j / (lags + 1.0)
        total += 2.0 * weight * float(u[j:] @ u[:-j]) / nobs
    return max(total, LRV_FLOOR)


def andrews_bandwidth(u: np.ndarray, groups: np.ndarray) -> int:
    """Andrews AR(1) plug-in bandwidth for the Bartlett kernel on panel residuals."""
    num = den = 0.0
    lengths = []
    for g in np.unique(groups):
        e = u[groups == g]
        lengths.append(e.shape[0])
        num += float(e[1:] @ e[:-1])
        den += float(e[:-1] @ e[:-1])
    rho = 0.0 if den <= 0 else min(0.97, max(-0.97, num / den))
    t_bar = float(np.mean(lengths))
    alpha = 4.0 * rho**2 / ((1.0 - rho) ** 2 * (1.0 + rho) ** 2)
    lags = int(math.floor(1.1447 * (alpha * t_bar) ** (1.0 / 3.0)))
    return max(0, min(lags, int(t_bar) - 1))


def panel_hac_covariance(
    X: np.ndarray, residuals: np.ndarray, groups: np.ndarray, bandwidth: int
) -> np.ndarray:
    """Newey-West covariance with the Bartlett kernel applied within each entity.

    Rows of each group must be in time order.
    """
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    meat = np.zeros((k, k))
    for g in np.unique(groups):
        rows = groups == g
        h = X[rows] * residuals[rows, None]
        meat += h.T @ h
        for j in range(1, min(bandwidth, h.shape[0] - 1) + 1):
            weight = 1.0 - j / (bandwidth + 1.0)
            gamma = h[j:].T @ h[:-j]
            meat += weight * (gamma + gamma.T)
    cov = bread @ meat @ bread * (n / (n - k))
    return 0.5 * (cov + cov.T)
