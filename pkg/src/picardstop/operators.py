"""Matrix-free linear operators, the unitary 2-D DFT and Kronecker SVDs.

All images are ``M x N`` real arrays and are flattened by stacking their
columns (Fortran order), so ``vec(B)[j + M*s] == B[j, s]``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

__all__ = [
    "LinearOperator",
    "DenseOperator",
    "IdentityOperator",
    "KroneckerOperator",
    "Blur2D",
    "SvdTriple",
    "KronSvd",
    "apply",
    "apply_adjoint",
    "vec",
    "unvec",
    "dft2",
    "idft2",
    "dft2_direct",
    "kron_svd",
    "dense_matrix",
]


def vec(B):
    """Stack the columns of ``B`` into one vector."""
    B = np.asarray(B)
    if B.ndim == 1:
        return B.copy()
    if B.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {B.shape}")
    return B.reshape(-1, order="F")


def unvec(b, M, N):
    """Inverse of :func:`vec` for an ``M x N`` image."""
    b = np.asarray(b)
    if b.ndim != 1 or b.size != M * N:
        raise ValueError(f"cannot reshape vector of length {b.size} into {M}x{N}")
    return b.reshape((M, N), order="F")


class LinearOperator:
    """Base class: an ``m x n`` real linear map with its transpose.

    Subclasses implement ``_matvec`` and ``_rmatvec`` on 1-D float arrays;
    shape checks live here.
    """

    kind = "abstract"

    def __init__(self, shape):
        self.shape = (int(shape[0]), int(shape[1]))

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.shape[1],):
            raise ValueError(f"{self.kind} operator of shape {self.shape} "
                             f"cannot act on vector of shape {x.shape}")
        return self._matvec(x)

    def apply_adjoint(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.shape[0],):
            raise ValueError(f"adjoint of {self.kind} operator of shape "
                             f"{self.shape} cannot act on vector of shape {y.shape}")
        return self._rmatvec(y)

    def __matmul__(self, x):
        return self.apply(x)

    @property
    def T(self):
        return _Transposed(self)

    def _matvec(self, x):
        raise NotImplementedError

    def _rmatvec(self, y):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"


class _Transposed(LinearOperator):
    kind = "transposed"

    def __init__(self, op):
        super().__init__(op.shape[::-1])
        self.op = op

    def _matvec(self, x):
        return self.op._rmatvec(x)

    def _rmatvec(self, y):
        return self.op._matvec(y)


class DenseOperator(LinearOperator):
    kind = "dense"

    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError("dense operator needs a 2-D matrix")
        matrix.setflags(write=False)
        super().__init__(matrix.shape)
        self.matrix = matrix

    def _matvec(self, x):
        return self.matrix @ x

    def _rmatvec(self, y):
        return self.matrix.T @ y


class IdentityOperator(LinearOperator):
    kind = "identity"

    def __init__(self, n):
        super().__init__((n, n))

    def _matvec(self, x):
        return x.copy()

    def _rmatvec(self, y):
        return y.copy()


class KroneckerOperator(LinearOperator):
    """``A1 (x) A2`` acting on column-stacked ``M x N`` images.

    ``A1`` is ``N x N`` (acts along rows of the image), ``A2`` is ``M x M``
    (acts along columns), so ``apply(vec(X)) == vec(A2 @ X @ A1.T)``.
    """

    kind = "kronecker"

    def __init__(self, A1, A2):
        A1 = np.array(A1, dtype=float)
        A2 = np.array(A2, dtype=float)
        for name, F in (("A1", A1), ("A2", A2)):
            if F.ndim != 2 or F.shape[0] != F.shape[1]:
                raise ValueError(f"Kronecker factor {name} must be square, got {F.shape}")
            F.setflags(write=False)
        self.A1, self.A2 = A1, A2
        self.M, self.N = A2.shape[0], A1.shape[0]
        m = self.M * self.N
        super().__init__((m, m))

    def _matvec(self, x):
        X = unvec(x, self.M, self.N)
        return vec(self.A2 @ X @ self.A1.T)

    def _rmatvec(self, y):
        Y = unvec(y, self.M, self.N)
        return vec(self.A2.T @ Y @ self.A1)

    def to_dense(self):
        return np.kron(self.A1, self.A2)


class Blur2D(LinearOperator):
    """Spatially invariant blur of an ``M x N`` image by a point spread function.

    Parameters
    ----------
    psf : (p, q) array
        Point spread function. Its entry ``center`` (default ``(p//2, q//2)``)
        is the weight of the unshifted pixel.
    image_shape : (M, N)
    boundary : {"zero", "periodic"}
        Zero boundary treats pixels outside the image as 0; periodic wraps.
    """

    kind = "blur2d"

    def __init__(self, psf, image_shape, boundary="zero", center=None):
        psf = np.array(psf, dtype=float)
        if psf.ndim != 2:
            raise ValueError("psf must be a 2-D array")
        if boundary not in ("zero", "periodic"):
            raise ValueError(f"unsupported boundary {boundary!r}; use 'zero' or 'periodic'")
        M, N = (int(d) for d in image_shape)
        if center is None:
            center = (psf.shape[0] // 2, psf.shape[1] // 2)
        self.psf = psf
        self.psf.setflags(write=False)
        self.center = tuple(int(c) for c in center)
        self.boundary = boundary
        self.M, self.N = M, N
        super().__init__((M * N, M * N))
        if boundary == "periodic":
            if psf.shape[0] > M or psf.shape[1] > N:
                raise ValueError("periodic blur needs a psf no larger than the image")
            emb = np.zeros((M, N))
            emb[: psf.shape[0], : psf.shape[1]] = psf
            emb = np.roll(emb, (-self.center[0], -self.center[1]), axis=(0, 1))
            self.transfer = sfft.fft2(emb)
        else:
            p, q = psf.shape
            self._full = (M + p - 1, N + q - 1)
            self._psf_hat = sfft.rfft2(psf, self._full)
            self._flip_hat = sfft.rfft2(psf[::-1, ::-1], self._full)

    def _conv_full(self, X, kernel_hat):
        return sfft.irfft2(sfft.rfft2(X, self._full) * kernel_hat, self._full)

    def _matvec(self, x):
        X = unvec(x, self.M, self.N)
        if self.boundary == "periodic":
            return vec(sfft.ifft2(sfft.fft2(X) * self.transfer).real)
        c0, c1 = self.center
        Y = self._conv_full(X, self._psf_hat)[c0:c0 + self.M, c1:c1 + self.N]
        return vec(Y)

    def _rmatvec(self, y):
        Y = unvec(y, self.M, self.N)
        if self.boundary == "periodic":
            return vec(sfft.ifft2(sfft.fft2(Y) * np.conj(self.transfer)).real)
        p, q = self.psf.shape
        r0 = p - 1 - self.center[0]
        r1 = q - 1 - self.center[1]
        X = self._conv_full(Y, self._flip_hat)[r0:r0 + self.M, r1:r1 + self.N]
        return vec(X)


def apply(op, x):
    return op.apply(x)


def apply_adjoint(op, y):
    return op.apply_adjoint(y)


def dense_matrix(op):
    """Materialize ``op`` column by column. Testing aid for small operators."""
    m, n = op.shape
    out = np.empty((m, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        out[:, j] = op.apply(e)
        e[j] = 0.0
    return out


def dft2(B):
    """Unitary 2-D DFT, ``conj(F_M).T @ B @ conj(F_N)``.

    With ``(F_m)[j, k] = exp(2i*pi*j*k/m) / sqrt(m)`` this is numpy's forward
    FFT with orthonormal scaling. A 1-D input is treated as an ``m x 1`` image.
    """
    B = np.asarray(B)
    if B.ndim == 1:
        B = B[:, None]
    return sfft.fft2(B, norm="ortho")


def idft2(C, real=True, tol=1e-10):
    """Inverse of :func:`dft2`.

    With ``real=True`` the input must be (numerically) conjugate-symmetric;
    the imaginary rounding residue is dropped. Otherwise ``ValueError``.
    """
    C = np.asarray(C, dtype=complex)
    if C.ndim == 1:
        C = C[:, None]
    X = sfft.ifft2(C, norm="ortho")
    if not real:
        return X
    scale = max(np.linalg.norm(C), np.finfo(float).tiny)
    imag = np.linalg.norm(X.imag)
    if imag > tol * scale:
        raise ValueError(f"spectrum is not conjugate-symmetric "
                         f"(imaginary part {imag:.3e} of norm {scale:.3e})")
    return X.real


def _dft_matrix(m):
    j = np.arange(m)
    return np.exp(2j * np.pi * np.outer(j, j) / m) / np.sqrt(m)


def dft2_direct(B):
    """Unitary 2-D DFT evaluated with explicit DFT matrices, O(MN(M+N)).

    Serves as an FFT-free reference for :func:`dft2`.
    """
    B = np.asarray(B)
    if B.ndim == 1:
        B = B[:, None]
    M, N = B.shape
    return _dft_matrix(M).conj().T @ B @ _dft_matrix(N).conj()


@dataclass(frozen=True)
class SvdTriple:
    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        k = self.S.size
        return (self.U[:, :k] * self.S) @ self.V[:, :k].T


@dataclass(frozen=True)
class KronSvd:
    """SVD of ``A1 (x) A2`` kept in factored form.

    ``S`` holds the singular values sorted nonincreasing; ``perm[i]`` is the
    Kronecker index ``p*M + q`` of the i-th sorted value, i.e. the product of
    the p-th singular value of ``A1`` and the q-th of ``A2``.
    """

    U1: np.ndarray
    s1: np.ndarray
    V1: np.ndarray
    U2: np.ndarray
    s2: np.ndarray
    V2: np.ndarray
    S: np.ndarray = field(repr=False)
    perm: np.ndarray = field(repr=False)

    @property
    def pairs(self):
        M = self.s2.size
        return np.stack(np.divmod(self.perm, M), axis=1)

    def u_column(self, i):
        p, q = divmod(int(self.perm[i]), self.s2.size)
        return np.kron(self.U1[:, p], self.U2[:, q])

    def v_column(self, i):
        p, q = divmod(int(self.perm[i]), self.s2.size)
        return np.kron(self.V1[:, p], self.V2[:, q])

    def to_triple(self):
        """Materialize the full sorted SVD. Only for small factors."""
        U = np.kron(self.U1, self.U2)[:, self.perm]
        V = np.kron(self.V1, self.V2)[:, self.perm]
        return SvdTriple(U, self.S.copy(), V)


def kron_svd(A1, A2):
    """SVD of the Kronecker product ``A1 (x) A2`` from the factor SVDs."""
    A1 = np.asarray(A1, dtype=float)
    A2 = np.asarray(A2, dtype=float)
    for name, F in (("A1", A1), ("A2", A2)):
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValueError(f"Kronecker factor {name} must be square, got {F.shape}")
    U1, s1, V1t = np.linalg.svd(A1)
    U2, s2, V2t = np.linalg.svd(A2)
    values = np.kron(s1, s2)
    # stable sort on the negated values: ties keep ascending Kronecker index
    perm = np.argsort(-values, kind="stable")
    return KronSvd(U1, s1, V1t.T, U2, s2, V2t.T, values[perm], perm)
