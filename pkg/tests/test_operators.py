import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.signal import convolve2d

from picardstop.operators import (Blur2D, DenseOperator, IdentityOperator, KroneckerOperator,
                                  apply, apply_adjoint, dense_matrix, dft2, dft2_direct, idft2,
                                  kron_svd, unvec, vec)


def test_vec_stacks_columns():
    assert np.array_equal(vec(np.array([[1, 3], [2, 4]])), [1, 2, 3, 4])


def test_unvec_round_trip(rng):
    B = rng.standard_normal((5, 7))
    assert np.array_equal(unvec(vec(B), 5, 7), B)


def test_vec_of_row_is_its_transpose():
    row = np.array([[1.0, 2.0, 3.0]])
    assert np.array_equal(vec(row), row.T[:, 0])


def test_unvec_rejects_wrong_length():
    with pytest.raises(ValueError):
        unvec(np.zeros(5), 2, 3)


def test_identity_dense_apply():
    op = DenseOperator(np.eye(3))
    assert np.array_equal(apply(op, np.array([1.0, 2.0, 3.0])), [1, 2, 3])


def test_identity_kronecker_is_identity(rng):
    op = KroneckerOperator(np.eye(2), np.eye(2))
    x = rng.standard_normal(4)
    assert np.allclose(op.apply(x), x, rtol=0, atol=1e-15)


def test_kronecker_matches_matrix_form_and_dense(rng):
    A1, A2 = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    X = rng.standard_normal((4, 4))
    op = KroneckerOperator(A1, A2)
    y = op.apply(vec(X))
    assert np.allclose(y, vec(A2 @ X @ A1.T), atol=1e-12)
    assert np.allclose(y, np.kron(A1, A2) @ vec(X), atol=1e-12)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_kronecker_dense_agreement(M, N, seed):
    r = np.random.default_rng(seed)
    A1, A2 = r.standard_normal((N, N)), r.standard_normal((M, M))
    op = KroneckerOperator(A1, A2)
    D = np.kron(A1, A2)
    x = r.standard_normal(M * N)
    assert np.allclose(op.apply(x), D @ x, atol=1e-12 * max(1, np.abs(D).sum()))


def test_kronecker_rejects_non_square():
    with pytest.raises(ValueError):
        KroneckerOperator(np.ones((2, 3)), np.eye(2))


def test_symmetric_dense_adjoint_equals_apply(rng):
    G = rng.standard_normal((4, 4))
    op = DenseOperator(G + G.T)
    y = rng.standard_normal(4)
    assert np.allclose(apply_adjoint(op, y), apply(op, y), atol=1e-14)


def test_random_dense_inner_product_identity(rng):
    op = DenseOperator(rng.standard_normal((5, 3)))
    x, y = rng.standard_normal(3), rng.standard_normal(5)
    assert abs(op.apply(x) @ y - x @ op.apply_adjoint(y)) <= 1e-12


def test_zero_boundary_blur_adjoint_is_dense_transpose(rng):
    psf = rng.random((3, 3))
    op = Blur2D(psf, (8, 8), "zero")
    D = dense_matrix(op)
    DT = dense_matrix(op.T)
    assert np.allclose(DT, D.T, atol=1e-13)


def test_zero_boundary_blur_matches_same_convolution(rng):
    psf = rng.random((5, 5))
    X = rng.standard_normal((9, 11))
    op = Blur2D(psf, X.shape, "zero")
    Y = unvec(op.apply(vec(X)), *X.shape)
    assert np.allclose(Y, convolve2d(X, psf, mode="same"), atol=1e-12)


def test_periodic_blur_matches_circular_convolution(rng):
    psf = rng.random((3, 3))
    X = rng.standard_normal((6, 5))
    op = Blur2D(psf, X.shape, "periodic")
    expect = convolve2d(np.pad(X, 1, mode="wrap"), psf, mode="valid")
    assert np.allclose(unvec(op.apply(vec(X)), 6, 5), expect, atol=1e-12)


def test_periodic_blur_is_diagonalized_by_dft(rng):
    psf = rng.random((5, 3))
    X = rng.standard_normal((8, 6))
    op = Blur2D(psf, X.shape, "periodic")
    lhs = dft2(unvec(op.apply(vec(X)), 8, 6))
    assert np.allclose(lhs, op.transfer * dft2(X), atol=1e-10)


def _operator_of_kind(kind, r, M, N):
    if kind == "dense":
        return DenseOperator(r.standard_normal((M * N + 2, M * N)))
    if kind == "kronecker":
        return KroneckerOperator(r.standard_normal((N, N)), r.standard_normal((M, M)))
    if kind == "identity":
        return IdentityOperator(M * N)
    psf = r.random((min(M, 3), min(N, 3)))
    return Blur2D(psf, (M, N), kind)


@given(st.sampled_from(["dense", "kronecker", "zero", "periodic", "identity"]),
       st.integers(1, 9), st.integers(1, 9), st.integers(0, 2 ** 32 - 1))
def test_adjoint_consistency_all_kinds(kind, M, N, seed):
    r = np.random.default_rng(seed)
    op = _operator_of_kind(kind, r, M, N)
    x, y = r.standard_normal(op.shape[1]), r.standard_normal(op.shape[0])
    gap = abs(op.apply(x) @ y - x @ op.apply_adjoint(y))
    assert gap <= 1e-10 * np.linalg.norm(x) * np.linalg.norm(y)


def test_shape_mismatch_is_rejected():
    op = DenseOperator(np.ones((3, 2)))
    with pytest.raises(ValueError):
        op.apply(np.ones(3))
    with pytest.raises(ValueError):
        op.apply_adjoint(np.ones(2))


def test_blur_rejects_unknown_boundary():
    with pytest.raises(ValueError):
        Blur2D(np.ones((3, 3)), (8, 8), "reflexive")


# --- transforms ---------------------------------------------------------------

def test_dft_of_delta_is_flat():
    B = np.zeros((2, 2))
    B[0, 0] = 1
    assert np.allclose(dft2(B), 0.5)


def test_dft_of_constant_is_dc_only():
    C = dft2(np.full((3, 4), 2.5))
    expect = np.zeros((3, 4))
    expect[0, 0] = np.sqrt(12) * 2.5
    assert np.allclose(C, expect, atol=1e-13)


def test_dft_preserves_norm_and_matches_direct_sum(rng):
    B = rng.standard_normal((4, 4))
    C = dft2(B)
    assert abs(np.linalg.norm(C) - np.linalg.norm(B)) <= 1e-12
    # element-by-element double sum with the unitary kernel
    M, N = B.shape
    direct = np.zeros((M, N), dtype=complex)
    for j in range(M):
        for k in range(N):
            for a in range(M):
                for c in range(N):
                    direct[j, k] += B[a, c] * np.exp(-2j * np.pi * (j * a / M + k * c / N))
    assert np.allclose(C, direct / np.sqrt(M * N), atol=1e-12)


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2 ** 32 - 1))
def test_dft_matches_matrix_oracle(M, N, seed):
    B = np.random.default_rng(seed).standard_normal((M, N))
    assert np.allclose(dft2(B), dft2_direct(B), atol=1e-11)


def test_dft_reduces_to_1d():
    x = np.arange(5.0)
    assert np.allclose(dft2(x)[:, 0], np.fft.fft(x) / np.sqrt(5))


def test_vectorized_dft_kronecker_convention(rng):
    # the size-M factor acts within columns: vec(DFT2[B]) = conj(F_N (x) F_M) vec(B)
    M, N = 3, 5
    B = rng.standard_normal((M, N))
    F = lambda m: np.exp(2j * np.pi * np.outer(np.arange(m), np.arange(m)) / m) / np.sqrt(m)
    assert np.allclose(vec(dft2(B)), np.kron(F(N), F(M)).conj().T @ vec(B), atol=1e-12)


def test_idft_zero_and_dc():
    assert np.array_equal(idft2(np.zeros((3, 3))), np.zeros((3, 3)))
    C = np.zeros((4, 2), dtype=complex)
    C[0, 0] = np.sqrt(8) * 1.5
    assert np.allclose(idft2(C), 1.5)


def test_idft_round_trip(rng):
    B = rng.standard_normal((8, 8))
    assert np.allclose(idft2(dft2(B)), B, atol=1e-12)


def test_idft_rejects_non_symmetric_spectrum():
    C = np.zeros((4, 4), dtype=complex)
    C[1, 0] = 1.0
    with pytest.raises(ValueError):
        idft2(C)
    assert np.iscomplexobj(idft2(C, real=False))


# --- Kronecker SVD -----------------------------------------------------------

def test_kron_svd_identity_is_stable():
    ks = kron_svd(np.eye(2), np.eye(3))
    assert np.array_equal(ks.S, np.ones(6))
    assert np.array_equal(ks.perm, np.arange(6))


def test_kron_svd_diagonal_example():
    ks = kron_svd(np.diag([2.0, 1.0]), np.diag([3.0, 1.0]))
    assert np.allclose(ks.S, [6, 3, 2, 1])


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_kron_svd_matches_dense(n1, n2, seed):
    r = np.random.default_rng(seed)
    A1, A2 = r.standard_normal((n1, n1)), r.standard_normal((n2, n2))
    ks = kron_svd(A1, A2)
    dense = np.linalg.svd(np.kron(A1, A2), compute_uv=False)
    assert np.allclose(ks.S, dense, atol=1e-10 * dense[0])
    assert np.all(np.diff(ks.S) <= 0)


def test_kron_svd_columns_and_reconstruction(rng):
    A1, A2 = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
    ks = kron_svd(A1, A2)
    D = np.kron(A1, A2)
    for i in (0, 5, 15):
        assert np.allclose(D @ ks.v_column(i), ks.S[i] * ks.u_column(i), atol=1e-10)
    T = ks.to_triple()
    assert np.linalg.norm(T.reconstruct() - D) <= 1e-10 * np.linalg.norm(D)


def test_kron_svd_rejects_non_square():
    with pytest.raises(ValueError):
        kron_svd(np.ones((2, 3)), np.eye(2))
