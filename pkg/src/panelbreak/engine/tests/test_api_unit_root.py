"""Tests for api_unit_root API functions."""

import math

import numpy as np
from scipy import stats

# Import test framework from parent
from ..framework import (
    test,
    ar1_panel,
    assert_close,
    assert_in_range,
    assert_raises,
    mc_reps,
    rejection_rate,
)

# Import functions under test
from ..api_unit_root import (
    METHODS,
    adf_fisher_test,
    adf_stat,
    fisher_combine,
    ips_moments,
    ips_null_moments,
    ips_test,
    llc_adjustment,
    llc_test,
    pp_fisher_test,
    pp_stat,
    select_lags_sic,
    unit_root_battery,
)
from ..api_panel import series_from_values
from ..errors import InsufficientEntities, InvalidPValue, SeriesTooShort


def _walk(rng: np.random.Generator, T: int) -> np.ndarray:
    return np.cumsum(rng.standard_normal(T))


# ============================================================================
# Tests for fisher_combine
# ============================================================================


@test()
def test_fisher_all_ones():
    """All p-values 1 give statistic 0 and combined p 1"""
    statistic, p = fisher_combine([1.0, 1.0, 1.0])
    assert statistic == 0.0
    assert_close(p, 1.0, atol=1e-15)


@test()
def test_fisher_single_p_identity():
    """p = 1/e gives statistic 2 and combined p 1/e"""
    statistic, p = fisher_combine([math.exp(-1)])
    assert_close(statistic, 2.0, atol=1e-12)
    assert_close(p, math.exp(-1), atol=1e-12)


@test()
def test_fisher_matches_formula():
    """Statistic is -2 sum log p with 2N degrees of freedom"""
    ps = [0.2, 0.5, 0.01, 0.9]
    statistic, p = fisher_combine(ps)
    expected = -2.0 * sum(math.log(x) for x in ps)
    assert_close(statistic, expected, atol=1e-12)
    assert_close(p, stats.chi2.sf(expected, 8), atol=1e-15)


@test()
def test_fisher_monotone():
    """Lowering any p-value raises the statistic"""
    base, _ = fisher_combine([0.3, 0.4, 0.5])
    lower, _ = fisher_combine([0.3, 0.2, 0.5])
    assert lower > base


@test()
def test_fisher_invalid_p():
    """p = 0, p > 1 and an empty list are rejected"""
    assert_raises(InvalidPValue, fisher_combine, [0.5, 0.0])
    assert_raises(InvalidPValue, fisher_combine, [1.5])
    assert_raises(InvalidPValue, fisher_combine, [])


@test()
def test_fisher_uniform_under_null():
    """Combined p of 50 uniform p-values is uniform (KS at 1%)"""
    rng = np.random.default_rng(99)
    combined = [fisher_combine(rng.uniform(size=50))[1] for _ in range(mc_reps(2000))]
    assert stats.kstest(combined, "uniform").pvalue > 0.01


# ============================================================================
# Tests for adf_stat
# ============================================================================


@test()
def test_adf_size_random_walk():
    """Dickey-Fuller on a random walk (T=500) rejects 3-7% at 5%"""
    rng = np.random.default_rng(500)
    ps = [adf_stat(series_from_values(_walk(rng, 500)), "constant", 0)[1] for _ in range(mc_reps(1000))]
    assert_in_range(rejection_rate(ps), 0.03, 0.07, "ADF size")


@test()
def test_adf_power_white_noise():
    """White noise (T=500) rejects the unit root at least 95% of the time"""
    rng = np.random.default_rng(501)
    ps = [adf_stat(series_from_values(rng.standard_normal(500)))[1] for _ in range(mc_reps(200))]
    assert rejection_rate(ps) >= 0.95


@test()
def test_adf_linear_trend_not_rejected():
    """A trending series tested with a constant only does not reject"""
    rng = np.random.default_rng(502)
    y = np.arange(200, dtype=float) + 0.1 * rng.standard_normal(200)
    _, p = adf_stat(series_from_values(y), "constant", 0)
    assert p > 0.10


@test()
def test_adf_too_short():
    """Fewer than 10 effective observations is SeriesTooShort"""
    assert_raises(SeriesTooShort, adf_stat, series_from_values(np.arange(8.0)), "constant", 0)


@test()
def test_sic_picks_ar_order():
    """SIC finds the augmentation needed by an AR(2) in differences"""
    rng = np.random.default_rng(503)
    e = rng.standard_normal(600)
    dy = np.zeros(600)
    for t in range(2, 600):
        dy[t] = 0.5 * dy[t - 1] - 0.3 * dy[t - 2] + e[t]
    assert select_lags_sic(np.cumsum(dy), "constant") in (2, 3)


# ============================================================================
# Tests for pp_stat
# ============================================================================


@test()
def test_pp_equals_df_at_zero_bandwidth():
    """With bandwidth 0 the Phillips-Perron correction vanishes exactly"""
    y = _walk(np.random.default_rng(504), 1000)
    s = series_from_values(y)
    assert_close(pp_stat(s, "constant", 0)[0], adf_stat(s, "constant", 0)[0], atol=1e-10)


@test()
def test_pp_close_to_df_without_autocorrelation():
    """Automatic bandwidth, i.i.d. increments (T=1000): mean PP - DF difference under 0.02"""
    rng = np.random.default_rng(505)
    diffs = []
    for _ in range(mc_reps(400)):
        s = series_from_values(_walk(rng, 1000))
        diffs.append(pp_stat(s)[0] - adf_stat(s, "constant", 0)[0])
    assert abs(float(np.mean(diffs))) < 0.02


@test()
def test_pp_size_random_walk():
    """Phillips-Perron on a random walk rejects 3-7% at 5%"""
    rng = np.random.default_rng(506)
    ps = [pp_stat(series_from_values(_walk(rng, 250)))[1] for _ in range(mc_reps(1000))]
    assert_in_range(rejection_rate(ps), 0.03, 0.07, "PP size")


@test()
def test_pp_corrects_serial_correlation():
    """With AR(1) increments PP is closer to nominal size than the unaugmented DF test"""
    rng = np.random.default_rng(507)
    pp, df = [], []
    for _ in range(mc_reps(500)):
        e = rng.standard_normal(260)
        u = np.zeros(260)
        for t in range(1, 260):
            u[t] = 0.5 * u[t - 1] + e[t]
        s = series_from_values(np.cumsum(u[60:]))
        pp.append(pp_stat(s)[1])
        df.append(adf_stat(s, "constant", 0)[1])
    assert abs(rejection_rate(pp) - 0.05) < abs(rejection_rate(df) - 0.05)


# ============================================================================
# Tests for moment tables
# ============================================================================


@test()
def test_ips_moments_large_t_anchor():
    """Null mean of the ADF t (constant, no lags) is near -1.53 for long series"""
    mean, var = ips_null_moments(250, 0, "constant")
    assert_in_range(mean, -1.58, -1.48, "E[t]")
    assert_in_range(var, 0.6, 0.9, "Var[t]")


@test()
def test_ips_moments_deterministic():
    """Simulated moments are identical on every call"""
    assert ips_null_moments.__wrapped__(60, 1, "constant", 500) == ips_null_moments.__wrapped__(60, 1, "constant", 500)


@test()
def test_ips_moments_table_lookup():
    """Tabulated constant-case moments, linear in T between rows and clamped past the last"""
    assert ips_moments(25, 0, "constant") == (-1.520, 0.809, "table")
    mean, var, source = ips_moments(27, 0, "constant")
    assert source == "table"
    assert_close(mean, -1.520 + 0.4 * (-1.526 + 1.520), atol=1e-12)
    assert_close(var, 0.809 + 0.4 * (0.789 - 0.809), atol=1e-12)
    assert ips_moments(250, 4, "constant") == (-1.503, 0.759, "table")
    assert ips_moments(40, 6, "constant")[2] == "simulated"
    assert ips_moments(40, 0, "none")[2] == "simulated"


@test()
def test_ips_standardized_with_table():
    """W-t-bar is the scaled distance of the mean t-ratio from the tabulated moments"""
    p = ar1_panel(12, n_entities=8, n_periods=60)
    result = ips_test(p, "y")
    moments = [ips_moments(60, e["lags"], "constant") for e in result.per_entity]
    t_bar = float(np.mean([e["statistic"] for e in result.per_entity]))
    mean_e = float(np.mean([m[0] for m in moments]))
    mean_v = float(np.mean([m[1] for m in moments]))
    assert_close(result.statistic, math.sqrt(8) * (t_bar - mean_e) / math.sqrt(mean_v), atol=1e-10)
    expected = "table" if all(e["lags"] <= 4 for e in result.per_entity) else "simulated"
    assert result.extra["moment_source"] == expected


@test()
def test_llc_adjustment_interpolates():
    """Adjustment factors interpolate linearly between tabulated T"""
    mu25, _ = llc_adjustment(25, "constant")
    mu30, _ = llc_adjustment(30, "constant")
    mid, _ = llc_adjustment(27.5, "constant")
    assert_close(mid, 0.5 * (mu25 + mu30), atol=1e-12)
    assert_close(llc_adjustment(10_000, "constant")[0], -0.504, atol=1e-12)


# ============================================================================
# Tests for panel tests
# ============================================================================


@test()
def test_panel_size_random_walks():
    """LLC and IPS reject 2-10% on independent random walks (N=20, T=100)"""
    llc, ips = [], []
    for rep in range(mc_reps(500)):
        p = ar1_panel(10_000 + rep)
        llc.append(llc_test(p, "y").p_value)
        ips.append(ips_test(p, "y").p_value)
    assert_in_range(rejection_rate(llc), 0.02, 0.10, "LLC size")
    assert_in_range(rejection_rate(ips), 0.02, 0.10, "IPS size")


@test()
def test_panel_power_stationary_ar():
    """LLC and IPS reject at least 90% on stationary AR(0.5) panels"""
    llc, ips = [], []
    for rep in range(mc_reps(100)):
        p = ar1_panel(20_000 + rep, rho=0.5)
        llc.append(llc_test(p, "y").p_value)
        ips.append(ips_test(p, "y").p_value)
    assert rejection_rate(llc) >= 0.90
    assert rejection_rate(ips) >= 0.90


@test()
def test_differencing_flips_all_tests():
    """After differencing an I(1) panel all four tests give p < 0.01 in at least 95% of reps"""
    flipped = []
    for rep in range(mc_reps(100)):
        results = unit_root_battery(ar1_panel(30_000 + rep), "y", differenced=True)
        flipped.append(all(r.p_value < 0.01 for r in results))
    assert float(np.mean(flipped)) >= 0.95


@test()
def test_methods_agree_on_clean_panels():
    """The four methods reach the same decision in at least 90% of clean panels"""
    agree = []
    for rep in range(mc_reps(60)):
        for rho in (1.0, 0.3):
            results = unit_root_battery(ar1_panel(40_000 + rep, rho=rho), "y", differenced=False)
            agree.append(len({r.reject for r in results}) == 1)
    assert float(np.mean(agree)) >= 0.90


@test()
def test_battery_layout():
    """Battery returns the four methods in report order with per-entity detail for IPS and Fisher"""
    results = unit_root_battery(ar1_panel(5, n_entities=5, n_periods=40), "y", differenced=False)
    assert tuple(r.method for r in results) == METHODS
    assert all(0.0 <= r.p_value <= 1.0 for r in results)
    for r in results[1:]:
        assert r.per_entity is not None and len(r.per_entity) == 5
    assert results[0].deterministic == "constant"
    differenced = unit_root_battery(ar1_panel(5, n_entities=5, n_periods=40), "y", differenced=True)
    assert differenced[0].deterministic == "none"


@test()
def test_fisher_tests_per_entity():
    """ADF- and PP-Fisher statistics are the Fisher combination of their per-entity p-values"""
    p = ar1_panel(6, n_entities=6, n_periods=60)
    for result in (adf_fisher_test(p, "y"), pp_fisher_test(p, "y")):
        statistic, _ = fisher_combine([e["p_value"] for e in result.per_entity])
        assert_close(result.statistic, statistic, atol=1e-9)


@test()
def test_short_entity_excluded():
    """An entity too short for the regression is dropped and listed"""
    data = ar1_panel(7, n_entities=4, n_periods=50).values[:, :, 0].copy()
    data[0, :44] = np.nan
    from ..framework import panel_from_arrays

    result = ips_test(panel_from_arrays({"y": data}), "y")
    assert [e["entity"] for e in result.exclusions] == ["E001"]
    assert len(result.per_entity) == 3


@test()
def test_insufficient_entities():
    """A single entity cannot form a panel test"""
    assert_raises(InsufficientEntities, llc_test, ar1_panel(8, n_entities=1), "y")
