import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from picardstop.experiments import NoiseSpec, add_noise, msd
from picardstop.gkb import BidiagFactorization, GivensQR, gkb_run, iterate_pls, pls_solve
from picardstop.operators import DenseOperator, IdentityOperator


def _check_invariants(A, b, fac):
    W, Z, B = fac.snapshot()
    AW = A @ W
    assert np.linalg.norm(AW - Z @ B) <= 1e-8 * max(np.linalg.norm(AW), 1e-300)
    assert np.linalg.norm(W.T @ W - np.eye(W.shape[1])) <= 1e-8
    Z = Z[:, : min(Z.shape)]  # with k = m the last column is zero
    assert np.linalg.norm(Z.T @ Z - np.eye(Z.shape[1])) <= 1e-8
    np.testing.assert_allclose(Z[:, 0] * fac.theta1, b, rtol=1e-10, atol=1e-10 * np.linalg.norm(b))
    assert all(r > 0 for r in fac.rho[: fac.k])
    assert all(t > 0 for t in fac.theta[: fac.k + (0 if fac.breakdown else 1)])


def test_identity_breaks_down_at_first_step():
    b = np.array([3.0, -1.0, 2.0, 0.5])
    fac = gkb_run(IdentityOperator(4), b)
    assert fac.k == 1 and fac.breakdown
    assert fac.rho[0] == pytest.approx(1.0) and fac.theta[1] == 0.0
    np.testing.assert_allclose(fac.W[:, 0], b / np.linalg.norm(b))
    it = pls_solve(fac)
    np.testing.assert_allclose(it.x, b, atol=1e-14)
    assert it.residual_norm == pytest.approx(0.0, abs=1e-14)


def test_diagonal_hand_run():
    A = np.diag([2.0, 1.0])
    fac = gkb_run(A, np.array([1.0, 0.0]))
    assert fac.k == 1 and fac.breakdown
    np.testing.assert_allclose(fac.Z[:, 0], [1, 0])
    np.testing.assert_allclose(fac.W[:, 0], [1, 0])
    assert fac.rho[0] == 2.0 and fac.theta[1] == 0.0
    np.testing.assert_allclose(pls_solve(fac).x, [0.5, 0.0])


@pytest.mark.parametrize("shape", [(20, 10), (30, 15)])
def test_full_iteration_matches_least_squares(shape):
    rng = np.random.default_rng(sum(shape))
    A = rng.standard_normal(shape)
    b = rng.standard_normal(shape[0])
    fac = gkb_run(A, b, k_max=shape[1])
    assert fac.k == shape[1]
    _check_invariants(A, b, fac)
    x_ls = np.linalg.lstsq(A, b, rcond=None)[0]
    np.testing.assert_allclose(pls_solve(fac).x, x_ls, rtol=1e-8, atol=1e-8)


def test_one_step_closed_form():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((7, 5))
    b = rng.standard_normal(7)
    fac = gkb_run(A, b, k_max=1)
    rho, theta = fac.rho[0], fac.theta[1]
    it = pls_solve(fac)
    assert it.y[0] == pytest.approx(fac.theta1 * rho / (rho ** 2 + theta ** 2), rel=1e-13)


def test_breakdown_gives_exact_solution_of_consistent_system():
    rng = np.random.default_rng(5)
    Q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
    A = Q @ np.diag([5, 4, 3, 2, 1, 1, 1, 1.0]) @ Q.T
    x = Q[:, :2] @ [1.0, -2.0]
    fac = gkb_run(A, A @ x)
    assert fac.breakdown and fac.k == 2
    it = pls_solve(fac)
    assert it.residual_norm <= 1e-12
    np.testing.assert_allclose(it.x, x, atol=1e-12)


def test_errors():
    A = np.eye(3)
    with pytest.raises(ValueError):
        BidiagFactorization(A, np.zeros(3))
    with pytest.raises(ValueError):
        BidiagFactorization(A, np.ones(3), k_max=4)
    with pytest.raises(ValueError):
        BidiagFactorization(A, np.ones(2))
    fac = BidiagFactorization(A, np.ones(3))
    with pytest.raises(ValueError):
        pls_solve(fac)


def test_breakdown_before_first_iteration():
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    fac = gkb_run(A, np.array([0.0, 1.0]))
    assert fac.k == 0 and fac.breakdown


def test_incremental_solves_match_fresh_solves():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((25, 12))
    b = rng.standard_normal(25)
    for fac, it in iterate_pls(A, b):
        fresh = pls_solve(fac)
        np.testing.assert_allclose(it.y, fresh.y, rtol=1e-12)
        y_ls = np.linalg.lstsq(fac.B, np.eye(fac.k + 1)[:, 0] * fac.theta1, rcond=None)[0]
        np.testing.assert_allclose(it.y, y_ls, rtol=1e-9, atol=1e-12)
        assert it.residual_norm == pytest.approx(
            np.linalg.norm(fac.theta1 * np.eye(fac.k + 1)[:, 0] - fac.B @ it.y), rel=1e-9)


def test_givens_empty_solve():
    assert GivensQR(2.0).solve().size == 0


def test_krylov_span():
    rng = np.random.default_rng(7)
    A = rng.standard_normal((15, 9))
    b = rng.standard_normal(15)
    fac = gkb_run(A, b, k_max=5)
    K = [A.T @ b]
    for _ in range(4):
        K.append(A.T @ (A @ K[-1]))
    K = np.column_stack([v / np.linalg.norm(v) for v in K])
    assert np.linalg.matrix_rank(np.hstack([fac.W, K]), tol=1e-8) == 5


@settings(max_examples=25)
@given(st.integers(3, 12), st.integers(2, 10), st.integers(0, 2 ** 31))
def test_invariants_and_residual_monotonicity(m, n, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    res = []
    fac = None
    for fac, it in iterate_pls(A, b):
        res.append(np.linalg.norm(b - A @ it.x))
        assert it.residual_norm == pytest.approx(res[-1], rel=1e-7, abs=1e-10)
    _check_invariants(A, b, fac)
    assert np.all(np.diff(res) <= 1e-10 * res[0])


def test_semiconvergence_on_reference_problem(reference_problem):
    P = reference_problem
    b = add_noise(P.b_true, NoiseSpec(1e-2, 2024))
    err = [msd(it.x, P.x_true) for _, it in iterate_pls(P.A, b, k_max=60)]
    k = int(np.argmin(err))
    assert 0 < k < len(err) - 1
    assert err[-1] > 1.5 * err[k]


def test_operator_wrapping():
    A = np.arange(12.0).reshape(4, 3) + 1
    fac = gkb_run(DenseOperator(A), np.ones(4))
    fac2 = gkb_run(A, np.ones(4))
    np.testing.assert_allclose(fac.B, fac2.B)
