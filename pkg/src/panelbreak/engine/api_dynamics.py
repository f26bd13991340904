"""Stability, impulse responses and variance decomposition of the levels VAR.

Everything here works on the levels VAR(p+1) implied by a VECM (or on any
VAR given directly as coefficient matrices).  The simulator doubles as the
brute-force oracle for the analytic impulse responses and decompositions.
"""

import logging
from dataclasses import dataclass
from typing import Annotated, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .api_vecm import ModelSpec, VecmEstimate, to_levels_var
from .errors import CholeskyFailure, ExplosiveWithoutFlag, InvalidSpec, ShapeMismatch
from .utils import IrfRow, RootRow, parallel_map

logger = logging.getLogger(__name__)

DEFAULT_HORIZON = 24
DEFAULT_SHOCK_SCALES: tuple[float, ...] = (0.5, 1.0, 2.0, -0.5, -1.0, -2.0)
CHOLESKY_RIDGE = 1e-10
EXPLOSIVE_LIMIT = 1.01

# ============================================================================
# VAR Representation
# ============================================================================


@dataclass(frozen=True)
class VarModel:
    A: tuple[np.ndarray, ...]
    sigma: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        A = tuple(np.atleast_2d(np.asarray(a, dtype=float)) for a in self.A)
        if not A:
            raise ShapeMismatch("a VAR needs at least one coefficient matrix")
        K = A[0].shape[0]
        for a in A:
            if a.shape != (K, K):
                raise ShapeMismatch(f"VAR blocks must all be {K}x{K}, got {a.shape}")
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (K, K):
            raise ShapeMismatch(f"sigma is {sigma.shape}, expected {K}x{K}")
        names = tuple(self.names) if self.names else tuple(f"y{i + 1}" for i in range(K))
        if len(names) != K:
            raise ShapeMismatch(f"{len(names)} names for {K} variables")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "names", names)

    @property
    def n_variables(self) -> int:
        return self.A[0].shape[0]

    @property
    def order(self) -> int:
        return len(self.A)


def as_var(model: Union[VecmEstimate, VarModel]) -> VarModel:
    if isinstance(model, VarModel):
        return model
    if isinstance(model, VecmEstimate):
        return VarModel(tuple(to_levels_var(model)), model.sigma, model.spec.endogenous)
    raise ShapeMismatch(f"cannot interpret {type(model).__name__} as a VAR")


def _ordering(model: VarModel, spec: Optional[ModelSpec], ordering: Optional[Sequence[str]]) -> tuple[str, ...]:
    if ordering is None:
        ordering = spec.ordering if spec is not None else model.names
    ordering = tuple(ordering)
    if sorted(ordering) != sorted(model.names):
        raise InvalidSpec(f"ordering {list(ordering)} is not a permutation of {list(model.names)}")
    return ordering


# ============================================================================
# Companion Form
# ============================================================================


@dataclass(frozen=True)
class CompanionForm:
    matrix: np.ndarray
    roots: np.ndarray
    moduli: np.ndarray

    @property
    def max_modulus(self) -> float:
        return float(self.moduli[0]) if self.moduli.size else 0.0

    def is_stable(self, tol: float = 1e-8) -> bool:
        """All roots strictly inside the unit circle."""
        return self.max_modulus < 1.0 - tol

    def count_unit_roots(self, tol: float = 1e-6) -> int:
        return int(np.sum(np.abs(self.moduli - 1.0) <= tol))

    def rows(self) -> list[RootRow]:
        return [
            {"re": float(z.real), "im": float(z.imag), "modulus": float(m)}
            for z, m in zip(self.roots, self.moduli)
        ]


def companion_matrix(A: Sequence[np.ndarray]) -> np.ndarray:
    blocks = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
    if not blocks:
        raise ShapeMismatch("no VAR coefficient matrices given")
    K = blocks[0].shape[0]
    for a in blocks:
        if a.shape != (K, K):
            raise ShapeMismatch(f"VAR blocks must all be square {K}x{K}, got {a.shape}")
    m = len(blocks)
    C = np.zeros((K * m, K * m))
    C[:K, :] = np.hstack(blocks)
    if m > 1:
        C[K:, :-K] = np.eye(K * (m - 1))
    return C


def companion_roots(
    A: Annotated[Sequence[np.ndarray], "VAR coefficient matrices A_1..A_m"],
) -> CompanionForm:
    """Eigenvalues of the stacked companion matrix, largest modulus first."""
    C = companion_matrix(A)
    roots = np.linalg.eigvals(C).astype(complex)
    moduli = np.abs(roots)
    # ties are broken on rounded values so that the order is platform-stable
    order = np.lexsort((np.round(-roots.imag, 10), np.round(-roots.real, 10), np.round(-moduli, 10)))
    return CompanionForm(matrix=C, roots=roots[order], moduli=moduli[order])


# ============================================================================
# Moving-Average Representation
# ============================================================================


def ma_coefficients(A: Sequence[np.ndarray], horizon: int) -> np.ndarray:
    """Psi_0 .. Psi_H stacked as (H+1, K, K)."""
    A = [np.asarray(a, dtype=float) for a in A]
    K = A[0].shape[0]
    psi = np.zeros((horizon + 1, K, K))
    psi[0] = np.eye(K)
    for h in range(1, horizon + 1):
        for j in range(1, min(h, len(A)) + 1):
            psi[h] += A[j - 1] @ psi[h - j]
    return psi


def cholesky_factor(sigma: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retried once with a small ridge on failure."""
    K = sigma.shape[0]
    try:
        return linalg.cholesky(sigma, lower=True)
    except linalg.LinAlgError:
        logger.warning("Residual covariance is not positive definite; adding a %.0e ridge", CHOLESKY_RIDGE)
    try:
        return linalg.cholesky(sigma + CHOLESKY_RIDGE * np.eye(K), lower=True)
    except linalg.LinAlgError:
        raise CholeskyFailure("residual covariance is not positive definite even after ridge")


def impact_matrix(sigma: np.ndarray, names: Sequence[str], ordering: Sequence[str]) -> np.ndarray:
    """Lower-triangular factor of sigma in the recursive ordering.

    Column j holds the impact of a one-standard-deviation shock to
    names[j]; rows are in names order.
    """
    names = list(names)
    pos = [names.index(v) for v in ordering]
    K = len(names)
    perm = np.zeros((K, K))
    perm[np.arange(K), pos] = 1.0
    sigma_o = perm @ sigma @ perm.T
    sigma_o = 0.5 * (sigma_o + sigma_o.T)
    L = cholesky_factor(sigma_o)
    B_ordered = perm.T @ L
    shock_col = [list(ordering).index(v) for v in names]
    return B_ordered[:, shock_col]


# ============================================================================
# Impulse Responses
# ============================================================================


@dataclass(frozen=True)
class IrfResult:
    names: tuple[str, ...]
    ordering: tuple[str, ...]
    shock_scales: tuple[float, ...]
    unit: np.ndarray  # (H+1, shock, response), one-standard-deviation shocks
    method: str = "orthogonalized"

    @property
    def horizons(self) -> range:
        return range(self.unit.shape[0])

    def scaled(self, scale: float) -> np.ndarray:
        return scale * self.unit

    @property
    def tensor(self) -> np.ndarray:
        """(scale, horizon, shock, response)."""
        return np.stack([self.scaled(s) for s in self.shock_scales])

    def response(self, shock: str, response: str, scale: float = 1.0) -> np.ndarray:
        return scale * self.unit[:, self.names.index(shock), self.names.index(response)]

    def rows(self) -> list[IrfRow]:
        out: list[IrfRow] = []
        for s, shock in enumerate(self.names):
            for r, response in enumerate(self.names):
                for scale in self.shock_scales:
                    for h in self.horizons:
                        out.append(
                            {
                                "shock": shock,
                                "response": response,
                                "scale": float(scale),
                                "horizon": h,
                                "value": float(scale * self.unit[h, s, r]),
                            }
                        )
        return out


def irf(
    model: Annotated[Union[VecmEstimate, VarModel], "Estimated VECM or levels VAR"],
    spec: Annotated[Optional[ModelSpec], "Supplies the recursive ordering"] = None,
    H: Annotated[int, "Last horizon"] = DEFAULT_HORIZON,
    scales: Annotated[Sequence[float], "Signed shock sizes in standard deviations"] = DEFAULT_SHOCK_SCALES,
    *,
    ordering: Optional[Sequence[str]] = None,
) -> IrfResult:
    if H < 0:
        raise InvalidSpec(f"horizon must be non-negative, got {H}")
    if spec is None and isinstance(model, VecmEstimate):
        spec = model.spec
    var = as_var(model)
    order = _ordering(var, spec, ordering)
    B = impact_matrix(var.sigma, var.names, order)
    psi = ma_coefficients(var.A, H)
    theta = psi @ B  # (H+1, response, shock)
    return IrfResult(
        names=var.names,
        ordering=order,
        shock_scales=tuple(float(s) for s in scales),
        unit=np.ascontiguousarray(np.transpose(theta, (0, 2, 1))),
    )


# ============================================================================
# Variance Decomposition
# ============================================================================


@dataclass(frozen=True)
class FevdResult:
    names: tuple[str, ...]
    ordering: tuple[str, ...]
    table: np.ndarray  # (H, response, shock) in percent, horizons 1..H
    se: np.ndarray  # (H, response)

    @property
    def horizon(self) -> int:
        return self.table.shape[0]

    def shares(self, response: str, h: int) -> np.ndarray:
        return self.table[h - 1, self.names.index(response)]

    def own_share(self, variable: str, h: int) -> float:
        i = self.names.index(variable)
        return float(self.table[h - 1, i, i])


def _fevd_from_theta(theta: np.ndarray, H: int) -> tuple[np.ndarray, np.ndarray]:
    mse = np.cumsum(theta[:H] ** 2, axis=0)  # (H, response, shock)
    total = mse.sum(axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        table = 100.0 * mse / total[:, :, None]
    return table, np.sqrt(total)


def fevd(
    model: Annotated[Union[VecmEstimate, VarModel], "Estimated VECM or levels VAR"],
    spec: Annotated[Optional[ModelSpec], "Supplies the recursive ordering"] = None,
    H: Annotated[int, "Number of forecast horizons"] = DEFAULT_HORIZON,
    *,
    ordering: Optional[Sequence[str]] = None,
) -> FevdResult:
    if H < 1:
        raise InvalidSpec(f"FEVD horizon must be >= 1, got {H}")
    if spec is None and isinstance(model, VecmEstimate):
        spec = model.spec
    var = as_var(model)
    order = _ordering(var, spec, ordering)
    B = impact_matrix(var.sigma, var.names, order)
    theta = ma_coefficients(var.A, H - 1) @ B
    table, se = _fevd_from_theta(theta, H)
    return FevdResult(names=var.names, ordering=order, table=table, se=se)


# ============================================================================
# Simulation
# ============================================================================


def simulate(
    A: Annotated[Union[Sequence[np.ndarray], VarModel], "VAR coefficient matrices"],
    T: Annotated[int, "Periods to simulate"],
    *,
    sigma: Optional[np.ndarray] = None,
    shocks: Optional[np.ndarray] = None,
    seed: Optional[int | np.random.SeedSequence] = None,
    n_paths: Optional[int] = None,
    init: Optional[np.ndarray] = None,
    exogenous: Optional[np.ndarray] = None,
    allow_unstable: bool = False,
) -> np.ndarray:
    """Iterate y_t = sum_j A_j y_{t-j} + x_t + u_t.

    u_t is taken from shocks when given, otherwise drawn as N(0, sigma)
    from a PCG64 stream seeded with seed.  init holds the presample levels
    (oldest first, shape (m, K)), zero by default; exogenous adds a known
    (T, K) term each period.  Returns (T, K), or (n_paths, T, K) when
    n_paths is set or shocks has three dimensions.
    """
    if isinstance(A, VarModel):
        if sigma is None:
            sigma = A.sigma
        A = A.A
    A = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
    roots = companion_roots(A)
    if roots.max_modulus > EXPLOSIVE_LIMIT and not allow_unstable:
        raise ExplosiveWithoutFlag(
            f"largest companion root has modulus {roots.max_modulus:.4f} > {EXPLOSIVE_LIMIT}"
        )
    K = A[0].shape[0]
    m = len(A)

    single = n_paths is None and (shocks is None or np.ndim(shocks) == 2)
    if shocks is not None:
        u = np.asarray(shocks, dtype=float)
        if u.ndim == 2:
            u = u[None]
        if u.shape[1:] != (T, K):
            raise ShapeMismatch(f"shocks have shape {u.shape[1:]}, expected {(T, K)}")
    else:
        if sigma is None:
            raise InvalidSpec("simulate needs either sigma or explicit shocks")
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        L = cholesky_factor(0.5 * (sigma + sigma.T)) if np.any(sigma) else np.zeros((K, K))
        rng = np.random.Generator(np.random.PCG64(seed))
        paths = 1 if n_paths is None else n_paths
        u = rng.standard_normal((paths, T, K)) @ L.T

    paths = u.shape[0]
    y = np.zeros((paths, m + T, K))
    if init is not None:
        y[:, :m] = np.asarray(init, dtype=float).reshape(m, K)
    x = None if exogenous is None else np.asarray(exogenous, dtype=float).reshape(T, K)
    for t in range(T):
        value = u[:, t].copy()
        for j in range(1, m + 1):
            value += y[:, m + t - j] @ A[j - 1].T
        if x is not None:
            value += x[t]
        y[:, m + t] = value
    out = y[:, m:]
    return out[0] if single else out


def simulated_fevd(
    model: Union[VecmEstimate, VarModel],
    spec: Optional[ModelSpec] = None,
    H: int = DEFAULT_HORIZON,
    *,
    n_paths: int = 200_000,
    seed: int = 0,
    chunk: int = 20_000,
    workers: int = 1,
    ordering: Optional[Sequence[str]] = None,
) -> np.ndarray:
    """Monte Carlo forecast-error variance shares, (H, response, shock) in percent.

    Each orthogonal shock is simulated on its own from a zero state; the
    h-step forecast error is then the level at step h.  Chunk j of shock k
    draws from SeedSequence(seed).spawn(...)[k * n_chunks + j], so the
    result does not depend on workers.
    """
    if spec is None and isinstance(model, VecmEstimate):
        spec = model.spec
    var = as_var(model)
    order = _ordering(var, spec, ordering)
    B = impact_matrix(var.sigma, var.names, order)
    K = var.n_variables
    n_chunks = -(-n_paths // chunk)
    children = np.random.SeedSequence(seed).spawn(K * n_chunks)

    def one(job: tuple[int, int]) -> np.ndarray:
        k, j = job
        size = min(chunk, n_paths - j * chunk)
        rng = np.random.Generator(np.random.PCG64(children[k * n_chunks + j]))
        z = rng.standard_normal((size, H, 1))
        paths = simulate(var.A, H, shocks=z * B[:, k], allow_unstable=True)
        return np.sum(paths**2, axis=0)  # (H, response)

    jobs = [(k, j) for k in range(K) for j in range(n_chunks)]
    sums = parallel_map(one, jobs, workers)
    mse = np.zeros((H, K, K))
    for (k, _), s in zip(jobs, sums):
        mse[:, :, k] += s
    return 100.0 * mse / mse.sum(axis=2, keepdims=True)


# ============================================================================
# Combined Result
# ============================================================================


@dataclass(frozen=True)
class DynamicsResult:
    companion: CompanionForm
    irf: IrfResult
    fevd: FevdResult


def analyze_dynamics(
    model: Union[VecmEstimate, VarModel],
    spec: Optional[ModelSpec] = None,
    H: int = DEFAULT_HORIZON,
    scales: Sequence[float] = DEFAULT_SHOCK_SCALES,
) -> DynamicsResult:
    var = as_var(model)
    if spec is None and isinstance(model, VecmEstimate):
        spec = model.spec
    companion = companion_roots(var.A)
    logger.info(
        "Companion matrix: %d roots, largest modulus %.6f", companion.roots.size, companion.max_modulus
    )
    return DynamicsResult(
        companion=companion,
        irf=irf(var, spec, H, scales),
        fevd=fevd(var, spec, H),
    )
