"""Synthetic panels with known data-generating processes.

Stream-splitting rule: entity i (0-based, in output order) draws every
random number from PCG64(SeedSequence(seed).spawn(N)[i]), in the order
documented on each generator.  Generating entities in parallel therefore
gives exactly the serial result.
"""

import logging
from dataclasses import dataclass, replace
from typing import Annotated, Literal, Optional

import numpy as np
from scipy import signal

from .api_dynamics import VarModel, simulate
from .api_panel import PanelDataset, panel_from_blocks
from .api_vecm import CANONICAL_VARIABLES, vecm_to_var
from .errors import InvalidSpec
from .utils import parallel_map

logger = logging.getLogger(__name__)

DgpKind = Literal[
    "independent_walks",
    "cointegrated",
    "stationary_ar",
    "heterogeneous_slopes",
    "vecm_calibrated",
]
DGP_KINDS: tuple[str, ...] = (
    "independent_walks",
    "cointegrated",
    "stationary_ar",
    "heterogeneous_slopes",
    "vecm_calibrated",
)

# Typical log levels of CO2 per capita, energy use per capita, GDP per
# capita and population; entity offsets are drawn around these.
LEVEL_MEANS = (1.0, 6.5, 8.0, 16.0)
ENTITY_OFFSET_SD = 0.5

# Long-run relation and short-run system estimated for middle-income countries
# 1980-2022 (normalized cointegrating vector; loadings, lagged-difference
# blocks and constants per equation co2, energy_use, gdp, population).
CALIBRATED_BETA = (1.0, -5.21341, 3.32459, -0.43041)
CALIBRATED_ALPHA = (-0.0016, 0.0054, -0.0088, -0.0023)
CALIBRATED_GAMMA = (
    (
        (0.01461, 0.01116, 0.011518, -0.00882),
        (-0.0029, 0.03565, -0.0174, -0.0058),
        (0.04238, 0.00684, 0.00243, -0.02495),
        (0.02508, -0.02333, 0.00344, -0.0211),
    ),
    (
        (0.01905, 0.014189, -0.01040, -0.008535),
        (-0.0140, 0.034141, -0.0098, 0.000341),
        (-0.0028, 0.030406, 0.0033, -0.002282),
        (0.01585, -0.00099, -0.0120, -0.011464),
    ),
)
CALIBRATED_CONSTANT = (0.005115, 0.003992, 0.006327, 0.002541)
CALIBRATED_NOISE_SD = (0.401, 0.05, 0.05, 0.05)

COINTEGRATED_BETA = (1.0, -5.2, 3.3, -0.4)

# ============================================================================
# DGP Specification
# ============================================================================


@dataclass(frozen=True)
class DgpSpec:
    """Parameters of a synthetic panel.

    beta is the normalized cointegrating vector (leading 1) and alpha the
    loadings.  dummy_effect shifts the long-run equilibrium of the first
    variable from dummy_threshold on; short_run_dummy adds to each
    equation's drift from that year on.  Unset parameters take the kind's
    defaults (see resolve).
    """

    kind: DgpKind
    seed: int
    n_entities: int = 20
    n_periods: int = 100
    start_year: int = 1980
    variables: tuple[str, ...] = CANONICAL_VARIABLES
    beta: Optional[tuple[float, ...]] = None
    alpha: Optional[tuple[float, ...]] = None
    gamma: Optional[tuple[tuple[tuple[float, ...], ...], ...]] = None
    constant: Optional[tuple[float, ...]] = None
    noise_sd: Optional[tuple[float, ...]] = None
    ar: float = 0.5
    heterogeneity: float = 1.0
    dummy_threshold: int = 2015
    dummy_effect: float = 0.0
    short_run_dummy: Optional[tuple[float, ...]] = None
    burn_in: int = 50

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    def resolve(self) -> "DgpSpec":
        K = self.n_variables
        zeros = (0.0,) * K
        if self.kind == "vecm_calibrated":
            defaults = dict(
                beta=CALIBRATED_BETA, alpha=CALIBRATED_ALPHA, gamma=CALIBRATED_GAMMA,
                constant=CALIBRATED_CONSTANT, noise_sd=CALIBRATED_NOISE_SD,
            )
        elif self.kind in ("cointegrated", "heterogeneous_slopes"):
            alpha = (-0.2,) + (0.0,) * (K - 1)
            defaults = dict(beta=COINTEGRATED_BETA[:K], alpha=alpha, gamma=(), constant=zeros, noise_sd=(1.0,) * K)
        else:
            defaults = dict(beta=None, alpha=None, gamma=(), constant=zeros, noise_sd=(1.0,) * K)
        defaults["short_run_dummy"] = zeros
        updates = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        spec = replace(self, **updates)
        spec._validate()
        return spec

    def _validate(self) -> None:
        K = self.n_variables
        if self.kind not in DGP_KINDS:
            raise InvalidSpec(f"unknown DGP kind {self.kind!r}; expected one of {DGP_KINDS}")
        if self.n_entities < 1 or self.n_periods < 2:
            raise InvalidSpec(f"need N >= 1 and T >= 2, got N={self.n_entities}, T={self.n_periods}")
        if K < 1 or len(set(self.variables)) != K:
            raise InvalidSpec("variables must be distinct and non-empty")
        if self.burn_in < 0:
            raise InvalidSpec(f"burn_in must be >= 0, got {self.burn_in}")
        if len(self.noise_sd) != K or any(s <= 0 for s in self.noise_sd):
            raise InvalidSpec(f"noise_sd needs {K} positive entries")
        if len(self.constant) != K or len(self.short_run_dummy) != K:
            raise InvalidSpec(f"constant and short_run_dummy need {K} entries")
        if not (-1.0 < self.ar < 1.0):
            raise InvalidSpec(f"AR coefficient must lie in (-1, 1), got {self.ar}")
        if self.kind in ("cointegrated", "heterogeneous_slopes", "vecm_calibrated"):
            if K < 2:
                raise InvalidSpec(f"{self.kind} needs at least two variables")
            if len(self.beta) != K or self.beta[0] != 1.0:
                raise InvalidSpec(f"beta needs {K} entries with a leading 1")
            if len(self.alpha) != K:
                raise InvalidSpec(f"alpha needs {K} entries")
        if self.kind == "cointegrated" and not (-2.0 < self.alpha[0] < 0.0):
            raise InvalidSpec(f"loading {self.alpha[0]} does not give a stationary equilibrium error")
        if self.gamma:
            shape = np.shape(self.gamma)
            if len(shape) != 3 or shape[1:] != (K, K):
                raise InvalidSpec(f"gamma must be a sequence of {K}x{K} blocks, got shape {shape}")


def entity_names(n: int) -> list[str]:
    return [f"E{i + 1:03d}" for i in range(n)]


# ============================================================================
# Generators
# ============================================================================


def _dummy_path(spec: DgpSpec, total: int) -> np.ndarray:
    years = spec.start_year - spec.burn_in + np.arange(total)
    return (years >= spec.dummy_threshold).astype(float)


def _levels_start(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    K = spec.n_variables
    means = np.resize(np.asarray(LEVEL_MEANS), K)
    return means + rng.normal(0.0, ENTITY_OFFSET_SD, K)


def _independent_walks(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    """Draws: level offsets (K), then shocks (T, K)."""
    y0 = _levels_start(spec, rng)
    u = rng.standard_normal((spec.n_periods, spec.n_variables)) * np.asarray(spec.noise_sd)
    return y0 + np.cumsum(u, axis=0)


def _stationary_ar(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    """Draws: level offsets (K), then shocks (burn_in + T, K)."""
    y0 = _levels_start(spec, rng)
    total = spec.burn_in + spec.n_periods
    u = rng.standard_normal((total, spec.n_variables)) * np.asarray(spec.noise_sd)
    deviations = signal.lfilter([1.0], [1.0, -spec.ar], u, axis=0)
    return y0 + deviations[spec.burn_in:]


def _triangular(spec: DgpSpec, rng: np.random.Generator, entity_index: int) -> np.ndarray:
    """First variable = mu_i + b_i'x + dummy_effect * d + e, x random walks.

    Draws: level offsets (K), then regressor shocks (burn_in + T, K - 1),
    then equilibrium-error shocks (burn_in + T).  For the cointegrated kind
    e is AR(1) with coefficient 1 + alpha[0]; for heterogeneous_slopes it
    is white noise and the first slope of the second half of the entities
    is scaled by 1 + heterogeneity.
    """
    K = spec.n_variables
    y0 = _levels_start(spec, rng)
    total = spec.burn_in + spec.n_periods
    sd = np.asarray(spec.noise_sd)
    ux = rng.standard_normal((total, K - 1)) * sd[1:]
    e = rng.standard_normal(total) * sd[0]
    x = y0[1:] + np.cumsum(ux, axis=0)
    slopes = -np.asarray(spec.beta[1:], dtype=float)
    if spec.kind == "cointegrated":
        e = signal.lfilter([1.0], [1.0, -(1.0 + spec.alpha[0])], e)
    elif entity_index >= spec.n_entities // 2:
        slopes = slopes.copy()
        slopes[0] *= 1.0 + spec.heterogeneity
    d = _dummy_path(spec, total)
    first = y0[0] + x @ slopes + spec.dummy_effect * d + e
    return np.column_stack([first, x])[spec.burn_in:]


def _vecm_system(spec: DgpSpec) -> tuple[list[np.ndarray], np.ndarray, np.ndarray]:
    alpha = np.asarray(spec.alpha, dtype=float)[:, None]
    beta = np.asarray(spec.beta, dtype=float)[:, None]
    gamma = [np.asarray(g, dtype=float) for g in spec.gamma]
    return vecm_to_var(alpha, beta, gamma), alpha[:, 0], beta[:, 0]


def _vecm_calibrated(spec: DgpSpec, rng: np.random.Generator) -> np.ndarray:
    """Panel VECM with entity equilibrium intercepts, started in equilibrium.

    Draws: level offsets (K), then shocks (burn_in + T, K).
    """
    A, alpha, beta = _vecm_system(spec)
    y0 = _levels_start(spec, rng)
    mu = float(beta @ y0)
    total = spec.burn_in + spec.n_periods
    u = rng.standard_normal((total, spec.n_variables)) * np.asarray(spec.noise_sd)
    d = _dummy_path(spec, total)
    d_lag = np.concatenate([[0.0], d[:-1]])
    exogenous = (
        np.asarray(spec.constant)
        - np.outer(mu + spec.dummy_effect * d_lag, alpha)
        + np.outer(d, spec.short_run_dummy)
    )
    init = np.tile(y0, (len(A), 1))
    y = simulate(A, total, shocks=u, init=init, exogenous=exogenous)
    return y[spec.burn_in:]


def generate(
    spec: Annotated[DgpSpec, "Data-generating process"],
    *,
    workers: int = 1,
) -> PanelDataset:
    spec = spec.resolve()
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_entities)
    names = entity_names(spec.n_entities)

    def one(i: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(children[i]))
        if spec.kind == "independent_walks":
            return _independent_walks(spec, rng)
        if spec.kind == "stationary_ar":
            return _stationary_ar(spec, rng)
        if spec.kind == "vecm_calibrated":
            return _vecm_calibrated(spec, rng)
        return _triangular(spec, rng, i)

    paths = parallel_map(one, range(spec.n_entities), workers)
    years = list(range(spec.start_year, spec.start_year + spec.n_periods))
    blocks = {
        name: {v: path[:, k] for k, v in enumerate(spec.variables)}
        for name, path in zip(names, paths)
    }
    logger.info(
        "Generated %s panel: N=%d T=%d seed=%d", spec.kind, spec.n_entities, spec.n_periods, spec.seed
    )
    return panel_from_blocks(blocks, years).with_note(
        f"synthetic {spec.kind} panel, seed {spec.seed}"
    )


def true_model(spec: DgpSpec) -> VarModel:
    """Levels VAR and innovation covariance of a VECM-type DGP."""
    spec = spec.resolve()
    sd = np.asarray(spec.noise_sd, dtype=float)
    if spec.kind == "vecm_calibrated":
        A, _, _ = _vecm_system(spec)
        return VarModel(tuple(A), np.diag(sd**2), spec.variables)
    if spec.kind == "cointegrated":
        K = spec.n_variables
        slopes = -np.asarray(spec.beta[1:], dtype=float)
        # u_1 = e + b'u_x, so the first innovation loads on every regressor shock
        loading = np.eye(K)
        loading[0, 1:] = slopes
        sigma = loading @ np.diag(sd**2) @ loading.T
        A = vecm_to_var(np.asarray(spec.alpha)[:, None], np.asarray(spec.beta)[:, None], [])
        return VarModel(tuple(A), sigma, spec.variables)
    raise InvalidSpec(f"{spec.kind} has no VAR representation")
