"""panelbreak Test Framework

Tests are plain functions registered with the @test decorator; the module
name (minus its ``test_`` prefix) is the category.  They return None and
use bare asserts, so pytest can collect them as well.

Usage from Python:
    from panelbreak.engine.tests import run_tests
    run_tests()                          # Run all tests
    run_tests(category="api_dynamics")   # Run one category
    run_tests(pattern="*fevd*")          # Run tests matching pattern

Usage from command line:
    panelbreak-test
    panelbreak-test --category api_coint
    panelbreak-test --pattern "*pedroni*" --reps 50
"""

import fnmatch
import math
import time
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Literal, Optional

import numpy as np
from scipy import signal

from .api_dynamics import VarModel, companion_roots
from .api_panel import PanelDataset, panel_from_blocks

# ============================================================================
# Test Registry
# ============================================================================


@dataclass
class TestInfo:
    """Information about a registered test."""

    __test__ = False

    func: Callable
    module: str  # Auto-extracted category: "api_panel", "pipeline", etc.
    skip: bool = False


# Global test registry: name -> TestInfo
TESTS: dict[str, TestInfo] = {}


def test(*, skip: bool = False) -> Callable:
    """Decorator to register a test function.

    Example:
        @test()
        def test_fisher_single_p():
            statistic, _ = fisher_combine([math.exp(-1)])
            assert_close(statistic, 2.0, atol=1e-12)

        @test(skip=True)
        def test_broken_feature():
            pass
    """

    def decorator(func: Callable) -> Callable:
        # "panelbreak.engine.tests.test_api_coint" -> "api_coint"
        category = func.__module__.rsplit(".", 1)[-1]
        if category.startswith("test_"):
            category = category[5:]
        TESTS[func.__name__] = TestInfo(func=func, module=category, skip=skip)
        return func

    return decorator


test.__test__ = False  # type: ignore[attr-defined]

# ============================================================================
# Test Results
# ============================================================================


@dataclass
class TestResult:
    """Result of a single test execution."""

    __test__ = False

    name: str
    category: str
    status: Literal["passed", "failed", "skipped"]
    duration: float = 0.0
    error: Optional[str] = None
    traceback: Optional[str] = None


@dataclass
class TestResults:
    """Aggregate results of a test run."""

    __test__ = False

    passed: int = 0
    failed: int = 0
    skipped: int = 0
    total_time: float = 0.0
    results: list[TestResult] = field(default_factory=list)

    def add(self, result: TestResult) -> None:
        self.results.append(result)
        if result.status == "passed":
            self.passed += 1
        elif result.status == "failed":
            self.failed += 1
        elif result.status == "skipped":
            self.skipped += 1

    def summary(self) -> str:
        parts = []
        if self.passed:
            parts.append(f"{self.passed} passed")
        if self.failed:
            parts.append(f"{self.failed} failed")
        if self.skipped:
            parts.append(f"{self.skipped} skipped")
        return f"Results: {', '.join(parts) or 'nothing ran'} ({self.total_time:.2f}s)"


# ============================================================================
# Assertion Helpers
# ============================================================================


def assert_close(actual: Any, expected: Any, atol: float = 1e-8, rtol: float = 0.0, label: str = "") -> None:
    """Assert arrays or scalars agree elementwise within atol + rtol * |expected|."""
    a = np.asarray(actual, dtype=float)
    e = np.asarray(expected, dtype=float)
    assert a.shape == e.shape or e.ndim == 0, f"{label} shape {a.shape} != {e.shape}"
    diff = np.abs(a - e)
    if not np.all(diff <= atol + rtol * np.abs(e)):
        raise AssertionError(f"{label or 'values'} differ by up to {float(np.max(diff)):.3g}: {a!r} vs {e!r}")


def assert_in_range(value: float, low: float, high: float, label: str = "value") -> None:
    assert not math.isnan(value), f"{label} is NaN"
    assert low <= value <= high, f"{label} = {value!r} outside [{low}, {high}]"


def assert_raises(exc_type: type[BaseException], func: Callable, *args: Any, **kwargs: Any) -> BaseException:
    """Call func and assert it raises exc_type; returns the exception."""
    try:
        func(*args, **kwargs)
    except exc_type as e:
        return e
    raise AssertionError(f"{getattr(func, '__name__', func)} did not raise {exc_type.__name__}")


def assert_has_keys(d: dict, *keys: str) -> None:
    """Assert dict has all specified keys."""
    assert isinstance(d, dict), f"Expected dict, got {type(d).__name__}"
    missing = [k for k in keys if k not in d]
    assert not missing, f"Missing keys: {missing}"


def rejection_rate(p_values: Iterable[float], alpha: float = 0.05) -> float:
    values = np.asarray(list(p_values), dtype=float)
    assert values.size, "no p-values"
    return float(np.mean(values < alpha))


# ============================================================================
# Test Configuration
# ============================================================================

# Cap on Monte Carlo replications; None runs every test at its full size.
# The runner sets it with --reps for quick passes (rate bands may then fail).
_reps_cap: Optional[int] = None


def set_reps_cap(n: Optional[int]) -> None:
    global _reps_cap
    _reps_cap = None if n is None else max(1, n)


def get_reps_cap() -> Optional[int]:
    return _reps_cap


def mc_reps(default: int) -> int:
    """Replications for a Monte Carlo test, honouring the runner's cap."""
    return default if _reps_cap is None else min(default, _reps_cap)


# ============================================================================
# Test Data Helpers
# ============================================================================


def panel_from_arrays(
    data: dict[str, np.ndarray],
    *,
    first_year: int = 2000,
    entities: Optional[list[str]] = None,
) -> PanelDataset:
    """Panel from variable -> (entity, year) arrays; NaN marks a missing cell."""
    shapes = {np.asarray(v).shape for v in data.values()}
    assert len(shapes) == 1, f"inconsistent shapes {shapes}"
    n_entities, n_years = shapes.pop()
    names = entities or [f"E{i + 1:03d}" for i in range(n_entities)]
    blocks = {
        name: {v: np.asarray(values, dtype=float)[i] for v, values in data.items()}
        for i, name in enumerate(names)
    }
    return panel_from_blocks(blocks, list(range(first_year, first_year + n_years)))


def ar1_panel(
    seed: int,
    rho: float = 1.0,
    n_entities: int = 20,
    n_periods: int = 100,
    variables: tuple[str, ...] = ("y",),
    burn_in: int = 50,
) -> PanelDataset:
    """Independent Gaussian AR(1) series per entity; rho = 1 gives random walks started at zero."""
    rng = np.random.default_rng(seed)
    skip = 0 if rho == 1.0 else burn_in
    data = {}
    for v in variables:
        e = rng.standard_normal((n_entities, n_periods + skip))
        data[v] = signal.lfilter([1.0], [1.0, -rho], e, axis=1)[:, skip:]
    return panel_from_arrays(data)


def random_stable_var(rng: np.random.Generator, K: int = 3, order: int = 2, max_modulus: float = 0.9) -> VarModel:
    """Random VAR(order) with every companion root inside max_modulus, and a random SPD covariance."""
    A = tuple(rng.normal(scale=0.4 / (j + 1), size=(K, K)) for j in range(order))
    modulus = companion_roots(A).max_modulus
    if modulus >= max_modulus:
        # scaling A_j by c**j scales every root by c
        c = 0.95 * max_modulus / modulus
        A = tuple(a * c ** (j + 1) for j, a in enumerate(A))
    L = np.tril(rng.normal(size=(K, K)))
    np.fill_diagonal(L, np.abs(np.diag(L)) + 0.5)
    names = tuple(f"x{k + 1}" for k in range(K))
    return VarModel(A, L @ L.T, names)


# ============================================================================
# Test Runner
# ============================================================================


def run_tests(
    pattern: str = "*",
    category: str = "*",
    verbose: bool = True,
    stop_on_failure: bool = False,
) -> TestResults:
    """Run registered tests and return results.

    Args:
        pattern: Glob pattern to filter test names (e.g., "*fevd*")
        category: Filter by module category (e.g., "api_coint")
        verbose: Print progress and results
        stop_on_failure: Stop at first failure
    """
    results = TestResults()
    start_time = time.time()

    tests_by_category: dict[str, list[tuple[str, TestInfo]]] = {}
    for name, info in sorted(TESTS.items()):
        if not fnmatch.fnmatch(name, pattern):
            continue
        if category != "*" and info.module != category:
            continue
        tests_by_category.setdefault(info.module, []).append((name, info))

    if not tests_by_category:
        if verbose:
            print(f"No tests found matching pattern={pattern!r}, category={category!r}")
        return results

    if verbose:
        print("=" * 80)
        print("panelbreak Test Runner")
        if _reps_cap is not None:
            print(f"Monte Carlo replications capped at {_reps_cap}")
        print("=" * 80)
        print()

    for cat_name in sorted(tests_by_category):
        tests = tests_by_category[cat_name]
        if verbose:
            print(f"[{cat_name}] Running {len(tests)} tests...")

        for name, info in tests:
            result = _run_single_test(name, info, verbose)
            results.add(result)
            if result.status == "failed" and stop_on_failure:
                if verbose:
                    print()
                    print("Stopping on first failure.")
                break

        if stop_on_failure and results.failed > 0:
            break
        if verbose:
            print()

    results.total_time = time.time() - start_time

    if verbose:
        print("=" * 80)
        print(results.summary())
        print("=" * 80)

    return results


def _run_single_test(name: str, info: TestInfo, verbose: bool) -> TestResult:
    if info.skip:
        if verbose:
            print(f"  - {name} (skipped)")
        return TestResult(name=name, category=info.module, status="skipped")

    start_time = time.time()
    try:
        info.func()
    except Exception as e:
        duration = time.time() - start_time
        error_msg = f"{type(e).__name__}: {e}"
        tb = traceback.format_exc()
        if verbose:
            print(f"  x {name} ({duration:.2f}s)")
            print(f"    {error_msg}")
            print()
            for line in tb.strip().split("\n"):
                print(f"    {line}")
            print()
        return TestResult(
            name=name,
            category=info.module,
            status="failed",
            duration=duration,
            error=error_msg,
            traceback=tb,
        )

    duration = time.time() - start_time
    if verbose:
        print(f"  + {name} ({duration:.2f}s)")
    return TestResult(name=name, category=info.module, status="passed", duration=duration)
