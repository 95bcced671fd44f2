"""Golub-Kahan bidiagonalization with full reorthogonalization.

After ``k`` steps, ``A @ W_k = Z_{k+1} @ B_k`` with ``W_k`` (n x k) and
``Z_{k+1}`` (m x (k+1)) orthonormal and ``B_k`` lower bidiagonal with
diagonal ``rho_1..rho_k`` and subdiagonal ``theta_2..theta_{k+1}``. The
projected least-squares iterate ``x_k = W_k y_k`` minimizes
``||theta_1 e_1 - B_k y||``, which is solved with Givens rotations that are
carried from one step to the next.
"""

from dataclasses import dataclass

import numpy as np

from .operators import DenseOperator, LinearOperator

__all__ = [
    "BidiagFactorization",
    "PlsIterate",
    "GivensQR",
    "gkb_run",
    "pls_solve",
    "iterate_pls",
]

BREAKDOWN_TOL = 1e-12


def _as_operator(A):
    return A if isinstance(A, LinearOperator) else DenseOperator(A)


def _reorthogonalize(v, Q):
    """Classical Gram-Schmidt against the columns of ``Q``, twice if needed."""
    if Q.shape[1] == 0:
        return v
    before = np.linalg.norm(v)
    v = v - Q @ (Q.T @ v)
    if np.linalg.norm(v) < 0.1 * before:
        v = v - Q @ (Q.T @ v)
    return v


def _complement_vector(Q):
    """Some unit vector orthogonal to the columns of ``Q`` (None if none exists)."""
    m, k = Q.shape
    if k >= m:
        return None
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        e = _reorthogonalize(e, Q)
        e = _reorthogonalize(e, Q)
        nrm = np.linalg.norm(e)
        if nrm > 0.5:
            return e / nrm
    return None


class BidiagFactorization:
    """State of the bidiagonalization of ``A`` started from ``b``.

    Call :meth:`step` to extend it by one iteration. ``k`` is the number of
    completed iterations; :attr:`W`, :attr:`Z` and :attr:`B` are views of the
    current factors.

    ``breakdown`` is set when ``theta_{k+1}`` or ``rho_{k+1}`` falls below
    ``tol * ||A||_est``; the Krylov space is then invariant and the
    factorization cannot grow. When ``theta_{k+1} == 0`` the last column of
    ``Z`` is an arbitrary unit vector orthogonal to the others, or zero when
``k = m`` leaves no room for one.
    """

    def __init__(self, A, b, k_max=None, tol=BREAKDOWN_TOL):
        self.A = _as_operator(A)
        b = np.asarray(b, dtype=float)
        m, n = self.A.shape
        if b.shape != (m,):
            raise ValueError(f"data vector has shape {b.shape}, operator is {self.A.shape}")
        theta1 = float(np.linalg.norm(b))
        if theta1 == 0.0:
            raise ValueError("data vector is zero")
        if k_max is None:
            k_max = min(m, n)
        if k_max > min(m, n):
            raise ValueError(f"k_max={k_max} exceeds min(m, n)={min(m, n)}")
        self.k_max = int(k_max)
        self.tol = tol
        self._W = np.zeros((n, self.k_max + 1))
        self._Z = np.zeros((m, self.k_max + 2))
        self.theta = [theta1]
        self.rho = []
        self.k = 0
        self.breakdown = False
        self.b = b
        z1 = b / theta1
        self._Z[:, 0] = z1
        r = self.A.apply_adjoint(z1)
        rho1 = float(np.linalg.norm(r))
        self.rho.append(rho1)
        self.norm_estimate = rho1
        if not rho1 > 0.0:
            self.breakdown = True
        else:
            self._W[:, 0] = r / rho1

    @property
    def theta1(self):
        return self.theta[0]

    @property
    def W(self):
        return self._W[:, : self.k]

    @property
    def Z(self):
        return self._Z[:, : self.k + 1]

    @property
    def B(self):
        k = self.k
        B = np.zeros((k + 1, k))
        idx = np.arange(k)
        B[idx, idx] = self.rho[:k]
        B[idx + 1, idx] = self.theta[1 : k + 1]
        return B

    @property
    def done(self):
        return self.breakdown or self.k >= self.k_max

    def step(self):
        """Run one iteration. Returns False if no step could be taken."""
        if self.done:
            return False
        j = self.k  # 0-based column of the current w_j, z_j
        A = self.A
        w, z, rho = self._W[:, j], self._Z[:, j], self.rho[j]
        p = A.apply(w) - rho * z
        p = _reorthogonalize(p, self._Z[:, : j + 1])
        theta = float(np.linalg.norm(p))
        self.norm_estimate = max(self.norm_estimate, float(np.hypot(rho, theta)))
        threshold = self.tol * self.norm_estimate
        self.k = j + 1
        if theta <= threshold:
            self.theta.append(0.0)
            self.breakdown = True
            fill = _complement_vector(self._Z[:, : j + 1])
            if fill is not None:
                self._Z[:, j + 1] = fill
            return True
        self.theta.append(theta)
        z_next = p / theta
        self._Z[:, j + 1] = z_next
        q = A.apply_adjoint(z_next) - theta * w
        q = _reorthogonalize(q, self._W[:, : j + 1])
        rho_next = float(np.linalg.norm(q))
        self.rho.append(rho_next)
        if rho_next <= threshold:
            self.breakdown = True
        else:
            self._W[:, j + 1] = q / rho_next
        return True

    def snapshot(self):
        """Copies of ``(W, Z, B)``."""
        return self.W.copy(), self.Z.copy(), self.B


class GivensQR:
    """Incremental QR of the lower bidiagonal ``B_k`` applied to ``theta_1 e_1``.

    ``R`` is upper bidiagonal (diagonal ``r_diag``, superdiagonal ``r_super``)
    so each solve is a backward recurrence of length ``k``.
    """

    def __init__(self, theta1):
        self.r_diag = []
        self.r_super = []
        self.phi = []
        self._phibar = float(theta1)
        self._rhobar = None

    @property
    def residual_norm(self):
        return abs(self._phibar)

    def add_column(self, rho, theta_next, rho_next=0.0):
        """Append column ``(rho_j, theta_{j+1})``; ``rho_next`` is ``rho_{j+1}``."""
        rhobar = rho if self._rhobar is None else self._rhobar
        r = float(np.hypot(rhobar, theta_next))
        c, s = rhobar / r, theta_next / r
        self.r_diag.append(r)
        self.r_super.append(s * rho_next)
        self._rhobar = -c * rho_next
        self.phi.append(c * self._phibar)
        self._phibar = s * self._phibar

    def solve(self):
        k = len(self.r_diag)
        y = np.empty(k)
        if k == 0:
            return y
        y[-1] = self.phi[-1] / self.r_diag[-1]
        for i in range(k - 2, -1, -1):
            y[i] = (self.phi[i] - self.r_super[i] * y[i + 1]) / self.r_diag[i]
        return y


@dataclass
class PlsIterate:
    k: int
    y: np.ndarray
    x: np.ndarray
    residual_norm: float

    @property
    def solution_norm(self):
        return float(np.linalg.norm(self.y))


def _rho_next(fac, j):
    return fac.rho[j + 1] if j + 1 < len(fac.rho) else 0.0


def pls_solve(fac):
    """Projected least-squares iterate for the current factorization."""
    if fac.k < 1:
        raise ValueError("factorization has no completed iteration")
    qr = GivensQR(fac.theta1)
    for j in range(fac.k):
        qr.add_column(fac.rho[j], fac.theta[j + 1], _rho_next(fac, j))
    y = qr.solve()
    return PlsIterate(fac.k, y, fac.W @ y, qr.residual_norm)


def iterate_pls(A, b, k_max=None, tol=BREAKDOWN_TOL):
    """Yield ``(fac, iterate)`` after every completed iteration.

    ``fac`` is the live factorization (not a copy); the QR is updated in O(1)
    and each solve costs O(k) plus the ``W @ y`` product.
    """
    fac = BidiagFactorization(A, b, k_max, tol)
    qr = GivensQR(fac.theta1)
    while fac.step():
        j = fac.k - 1
        qr.add_column(fac.rho[j], fac.theta[j + 1], _rho_next(fac, j))
        y = qr.solve()
        yield fac, PlsIterate(fac.k, y, fac.W @ y, qr.residual_norm)


def gkb_run(A, b, k_max=None, on_step=None, tol=BREAKDOWN_TOL):
    """Run the bidiagonalization for up to ``k_max`` iterations.

    ``on_step(fac, iterate)`` is called after each iteration; a truthy return
    value ends the run early. Returns the factorization.
    """
    fac = None
    for fac, it in iterate_pls(A, b, k_max, tol):
        if on_step is not None and on_step(fac, it):
            break
    if fac is None:
        # breakdown before the first iteration
        fac = BidiagFactorization(A, b, k_max, tol)
    return fac
