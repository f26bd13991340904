import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import (
    Annotated,
    Any,
    Callable,
    Iterable,
    Literal,
    Optional,
    TypedDict,
    TypeVar,
)

from scipy import stats

from .errors import NumericalError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

Deterministic = Literal["none", "constant", "constant_trend"]
DETERMINISTIC_CHOICES: tuple[str, ...] = ("none", "constant", "constant_trend")

Tail = Literal["left", "right", "two"]

DEFAULT_ALPHA = 0.05

# ============================================================================
# TypedDict Definitions for Report Rows
# ============================================================================


class EntityStatistic(TypedDict):
    """Per-entity ingredient of a panel test"""

    entity: Annotated[str, "Entity identifier"]
    statistic: Annotated[float, "Per-entity test statistic"]
    p_value: Annotated[Optional[float], "Per-entity p-value, if defined"]
    lags: Annotated[int, "Augmentation lags used for this entity"]
    nobs: Annotated[int, "Effective observations"]


class RootRow(TypedDict):
    """Companion-matrix eigenvalue"""

    re: Annotated[float, "Real part"]
    im: Annotated[float, "Imaginary part"]
    modulus: Annotated[float, "Absolute value"]


class IrfRow(TypedDict):
    """One point of a scaled impulse response"""

    shock: Annotated[str, "Variable whose orthogonalized shock is applied"]
    response: Annotated[str, "Responding variable"]
    scale: Annotated[float, "Signed shock size in standard deviations"]
    horizon: Annotated[int, "Periods after impact"]
    value: Annotated[float, "Response"]


class Exclusion(TypedDict):
    """Entity dropped from an analysis"""

    entity: Annotated[str, "Entity identifier"]
    reason: Annotated[str, "Why the entity was dropped"]


# ============================================================================
# Test Reports
# ============================================================================


@dataclass(frozen=True)
class TestReport:
    """Named statistic with its reference distribution and decision."""

    __test__ = False

    name: str
    statistic: float
    distribution: Literal["chi2", "F", "normal"]
    df: tuple[float, ...]
    p_value: float
    alpha: float = DEFAULT_ALPHA
    components: tuple["TestReport", ...] = ()
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0) and not math.isnan(self.p_value):
            raise NumericalError(f"p-value out of range for {self.name}: {self.p_value}")
        if any(d <= 0 for d in self.df):
            raise NumericalError(f"non-positive degrees of freedom for {self.name}")

    @property
    def reject(self) -> bool:
        return self.p_value < self.alpha

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "distribution": self.distribution,
            "df": list(self.df),
            "p_value": self.p_value,
            "reject": self.reject,
            "extra": dict(self.extra),
            "components": [c.to_dict() for c in self.components],
        }


def clip_probability(p: float) -> float:
    return min(1.0, max(0.0, float(p)))


def chi2_report(name: str, statistic: float, df: float, **extra: Any) -> TestReport:
    p = clip_probability(stats.chi2.sf(statistic, df))
    return TestReport(name, float(statistic), "chi2", (float(df),), p, extra=extra)


def f_report(
    name: str, statistic: float, df1: float, df2: float, **extra: Any
) -> TestReport:
    p = clip_probability(stats.f.sf(statistic, df1, df2))
    return TestReport(name, float(statistic), "F", (float(df1), float(df2)), p, extra=extra)


def normal_p_value(statistic: float, tail: Tail) -> float:
    if tail == "left":
        p = stats.norm.cdf(statistic)
    elif tail == "right":
        p = stats.norm.sf(statistic)
    else:
        p = 2.0 * stats.norm.sf(abs(statistic))
    return clip_probability(p)


def normal_report(
    name: str, statistic: float, tail: Tail = "left", **extra: Any
) -> TestReport:
    p = normal_p_value(statistic, tail)
    return TestReport(name, float(statistic), "normal", (), p, extra={"tail": tail, **extra})


# ============================================================================
# Deterministic Parallel Map
# ============================================================================


def parallel_map(
    func: Callable[[T], R], items: Iterable[T], workers: int = 1
) -> list[R]:
    """Apply func to items, returning results in input order.

    With workers > 1 the calls run on a thread pool; the result order never
    depends on completion order, so callers that sort their inputs get
    identical reductions either way.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
