"""Tests for api_dynamics API functions."""

import numpy as np

# Import test framework from parent
from ..framework import (
    test,
    assert_close,
    assert_raises,
    random_stable_var,
)

# Import functions under test
from ..api_dynamics import (
    DEFAULT_SHOCK_SCALES,
    VarModel,
    analyze_dynamics,
    companion_matrix,
    companion_roots,
    fevd,
    impact_matrix,
    irf,
    ma_coefficients,
    simulate,
    simulated_fevd,
)
from ..api_synth import DgpSpec, generate
from ..api_vecm import ModelSpec, estimate_long_run, estimate_reduced_rank, estimate_vecm
from ..errors import CholeskyFailure, ExplosiveWithoutFlag, InvalidSpec, ShapeMismatch


# ============================================================================
# Tests for companion_roots
# ============================================================================


@test()
def test_companion_layout():
    """Companion matrix stacks A_1..A_m on top of a shifted identity"""
    A1, A2 = np.full((2, 2), 0.1), np.full((2, 2), 0.2)
    C = companion_matrix([A1, A2])
    assert C.shape == (4, 4)
    assert_close(C[:2, :2], A1, atol=0)
    assert_close(C[:2, 2:], A2, atol=0)
    assert_close(C[2:, :2], np.eye(2), atol=0)
    assert_close(C[2:, 2:], np.zeros((2, 2)), atol=0)


@test()
def test_companion_roots_sorted_and_counted():
    """Roots come largest modulus first; exact unit roots are counted"""
    roots = companion_roots([np.diag([1.0, 0.5, -0.8])])
    assert_close(roots.moduli, [1.0, 0.8, 0.5], atol=1e-12)
    assert roots.count_unit_roots() == 1
    assert not roots.is_stable()
    assert len(roots.rows()) == 3


@test()
def test_random_var_is_stable():
    """The stable-VAR helper produces stable systems"""
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert companion_roots(random_stable_var(rng).A).is_stable()


@test()
def test_estimated_vecm_has_k_minus_r_unit_roots():
    """The levels VAR implied by an estimated rank-1 VECM has exactly three unit roots"""
    p = generate(DgpSpec(kind="cointegrated", seed=2, n_entities=10, n_periods=60))
    spec = ModelSpec(exogenous_dummies=(), lag_order=1)
    est = estimate_vecm(p, spec, estimate_long_run(p, spec))
    result = analyze_dynamics(est)
    assert result.companion.count_unit_roots() == 3
    assert result.companion.roots.size == 4 * 2


@test()
def test_reduced_rank_vecm_unit_roots():
    """Rank r from the reduced-rank estimator leaves K - r unit roots within 1e-6"""
    p = generate(DgpSpec(kind="cointegrated", seed=2, n_entities=10, n_periods=60))
    for rank in (1, 2):
        spec = ModelSpec(exogenous_dummies=(), lag_order=1, rank=rank, estimator="reduced_rank")
        est = estimate_vecm(p, spec, estimate_reduced_rank(p, spec))
        companion = analyze_dynamics(est).companion
        assert companion.count_unit_roots(tol=1e-6) == 4 - rank, companion.moduli
        assert companion.roots.size == 4 * 2


@test()
def test_companion_roots_permutation_invariant():
    """Reordering the variables (P A P') gives the same sorted roots"""
    model = random_stable_var(np.random.default_rng(2), K=4, order=2)
    P = np.eye(4)[[2, 0, 3, 1]]
    original = companion_roots(model.A)
    permuted = companion_roots([P @ a @ P.T for a in model.A])
    assert_close(permuted.moduli, original.moduli, atol=1e-8)
    assert_close(np.sort_complex(permuted.roots).real, np.sort_complex(original.roots).real, atol=1e-8)
    assert_close(np.sort_complex(permuted.roots).imag, np.sort_complex(original.roots).imag, atol=1e-8)


# ============================================================================
# Tests for impact_matrix
# ============================================================================


@test()
def test_impact_factorizes_sigma():
    """B B' = Sigma in any ordering"""
    model = random_stable_var(np.random.default_rng(3))
    for ordering in (("x1", "x2", "x3"), ("x3", "x1", "x2")):
        B = impact_matrix(model.sigma, model.names, ordering)
        assert_close(B @ B.T, model.sigma, atol=1e-12)


@test()
def test_impact_recursive_structure():
    """The first variable in the ordering responds on impact only to its own shock"""
    model = random_stable_var(np.random.default_rng(4))
    B = impact_matrix(model.sigma, model.names, ("x2", "x1", "x3"))
    assert_close(B[1, [0, 2]], [0.0, 0.0], atol=1e-14)
    assert B[1, 1] > 0


@test()
def test_impact_cholesky_failure():
    """A negative definite covariance cannot be factorized"""
    assert_raises(CholeskyFailure, impact_matrix, -np.eye(2), ("a", "b"), ("a", "b"))


# ============================================================================
# Tests for irf
# ============================================================================


@test()
def test_irf_matches_simulated_impulse():
    """Analytic responses equal a simulated one-off shock of B[:, k]"""
    model = random_stable_var(np.random.default_rng(5), K=3, order=2)
    result = irf(model, H=12)
    B = impact_matrix(model.sigma, model.names, model.names)
    for k in range(3):
        shocks = np.zeros((13, 3))
        shocks[0] = B[:, k]
        path = simulate(model.A, 13, shocks=shocks)
        assert_close(result.unit[:, k, :], path, atol=1e-8)


@test()
def test_irf_impact_is_b():
    """Horizon-0 response to shock k is column k of the impact matrix"""
    model = random_stable_var(np.random.default_rng(6))
    B = impact_matrix(model.sigma, model.names, model.names)
    assert_close(irf(model, H=0).unit[0], B.T, atol=1e-14)


@test()
def test_irf_linear_in_scale():
    """Scaled responses are the one-s.d. responses times the signed scale"""
    model = random_stable_var(np.random.default_rng(7))
    result = irf(model, H=5)
    assert_close(result.response("x1", "x2", -2.0), -2.0 * result.response("x1", "x2"), atol=1e-14)
    assert result.tensor.shape == (len(DEFAULT_SHOCK_SCALES), 6, 3, 3)
    assert len(result.rows()) == 3 * 3 * len(DEFAULT_SHOCK_SCALES) * 6


@test()
def test_irf_rejects_bad_input():
    """Negative horizons and foreign orderings are invalid"""
    model = random_stable_var(np.random.default_rng(8))
    assert_raises(InvalidSpec, irf, model, None, -1)
    assert_raises(InvalidSpec, irf, model, ordering=("x1", "x2", "zz"))


@test()
def test_ma_coefficients_var1():
    """For a VAR(1) Psi_h = A^h"""
    A = np.array([[0.5, 0.1], [0.0, 0.3]])
    psi = ma_coefficients([A], 4)
    assert_close(psi[4], np.linalg.matrix_power(A, 4), atol=1e-14)


# ============================================================================
# Tests for fevd
# ============================================================================


@test()
def test_fevd_rows_sum_to_100():
    """Shares of every response at every horizon sum to 100"""
    model = random_stable_var(np.random.default_rng(9), K=4, order=3)
    result = fevd(model, H=24)
    assert result.table.shape == (24, 4, 4)
    assert_close(result.table.sum(axis=2), np.full((24, 4), 100.0), atol=1e-9)
    assert np.all(result.table >= 0)


@test()
def test_fevd_first_in_ordering_own_share():
    """At horizon 1 the first variable in the ordering explains all of its own variance"""
    model = random_stable_var(np.random.default_rng(10))
    result = fevd(model, H=3, ordering=("x2", "x1", "x3"))
    assert_close(result.own_share("x2", 1), 100.0, atol=1e-9)
    assert_close(result.shares("x2", 1), [0.0, 100.0, 0.0], atol=1e-9)


@test()
def test_fevd_standard_error():
    """The one-step forecast standard error is the innovation standard deviation"""
    model = random_stable_var(np.random.default_rng(11))
    result = fevd(model, H=2)
    assert_close(result.se[0], np.sqrt(np.diag(model.sigma)), atol=1e-12)
    assert np.all(result.se[1] >= result.se[0])


@test()
def test_fevd_invalid_horizon():
    """The decomposition needs at least one horizon"""
    assert_raises(InvalidSpec, fevd, random_stable_var(np.random.default_rng(12)), None, 0)


@test()
def test_simulated_fevd_matches_analytic():
    """Monte Carlo shares agree with the analytic decomposition within one point"""
    model = random_stable_var(np.random.default_rng(13))
    analytic = fevd(model, H=6).table
    simulated = simulated_fevd(model, H=6, n_paths=80_000, chunk=20_000, seed=1)
    assert_close(simulated, analytic, atol=1.0)


@test()
def test_simulated_fevd_worker_invariant():
    """Simulated shares do not depend on the worker count"""
    model = random_stable_var(np.random.default_rng(14))
    serial = simulated_fevd(model, H=4, n_paths=4_000, chunk=1_000, seed=2, workers=1)
    parallel = simulated_fevd(model, H=4, n_paths=4_000, chunk=1_000, seed=2, workers=3)
    assert np.array_equal(serial, parallel)


# ============================================================================
# Tests for simulate
# ============================================================================


@test()
def test_simulate_seeded():
    """Equal seeds give equal paths"""
    model = random_stable_var(np.random.default_rng(15))
    a = simulate(model, 50, seed=3)
    b = simulate(model, 50, seed=3)
    assert a.shape == (50, 3)
    assert np.array_equal(a, b)
    assert simulate(model, 10, seed=3, n_paths=4).shape == (4, 10, 3)


@test()
def test_simulate_explosive_guard():
    """Explosive systems need an explicit flag"""
    A = [np.array([[1.1]])]
    assert_raises(ExplosiveWithoutFlag, simulate, A, 5, sigma=np.eye(1))
    path = simulate(A, 5, shocks=np.eye(5, 1), allow_unstable=True)
    assert_close(path[:, 0], 1.1 ** np.arange(5), atol=1e-12)


@test()
def test_simulate_shape_checks():
    """Shock arrays must match (T, K) and VarModel blocks must be square"""
    assert_raises(ShapeMismatch, simulate, [np.eye(2) * 0.5], 4, shocks=np.zeros((3, 2)))
    assert_raises(ShapeMismatch, VarModel, (np.ones((2, 3)),), np.eye(2), ("a", "b"))


@test()
def test_simulate_covariance_factorization():
    """A singular covariance is simulated after a ridge; an indefinite one fails cleanly"""
    A = [np.eye(2) * 0.5]
    path = simulate(A, 200, sigma=np.ones((2, 2)), seed=4)
    assert_close(path[:, 0], path[:, 1], atol=1e-3)
    assert_raises(CholeskyFailure, simulate, A, 5, sigma=-np.eye(2), seed=4)
