"""Tikhonov regularization of the projected problem, and its dense analogue.

For the bidiagonal ``B_k = U S V^T`` the projected Tikhonov solution is

    y_lam = theta_1 * sum_j s_j U[0, j] / (s_j**2 + lam**2) * V[:, j]

The regularization parameter is picked by (weighted) generalized cross
validation on the projected problem. The weight of W-GCV follows the
adaptive recipe of Chung, Nagy and O'Leary (HyBR): at every iteration the
weight that makes the W-GCV derivative vanish at ``lam = s_min`` is
computed, clipped to 1, and averaged with the previous ones.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .gkb import BidiagFactorization, GivensQR
from .operators import SvdTriple

__all__ = [
    "svd_bidiagonal",
    "ProjectedTikhonovSolution",
    "tikhonov_projected",
    "tikhonov_coefficients",
    "wgcv_function",
    "LambdaChoice",
    "wgcv_select",
    "gcv_select",
    "adaptive_weight",
    "HybridResult",
    "hybrid_run",
    "direct_tikhonov",
    "df_lambda_select",
    "minimize_log_scalar",
]


def svd_bidiagonal(B):
    """Full SVD of a ``(k+1) x k`` bidiagonal, singular values decreasing."""
    U, s, Vt = np.linalg.svd(np.asarray(B, dtype=float), full_matrices=True)
    return SvdTriple(U, s, Vt.T)


def _unpack(fac):
    """Accept a factorization or a ``(B, theta1)`` pair."""
    if isinstance(fac, BidiagFactorization):
        return fac.B, fac.theta1
    B, theta1 = fac
    return np.asarray(B, dtype=float), float(theta1)


@dataclass
class ProjectedTikhonovSolution:
    lam: float
    y: np.ndarray
    svd: SvdTriple = field(repr=False)

    def residual_norm(self, B, theta1):
        r = -(B @ self.y)
        r[0] += theta1
        return float(np.linalg.norm(r))


def tikhonov_coefficients(svd, theta1, lam):
    """Coefficients of ``y_lam`` in the right singular basis."""
    s = svd.S
    return theta1 * s * svd.U[0, : s.size] / (s ** 2 + lam ** 2)


def tikhonov_projected(fac, lam, svd=None):
    B, theta1 = _unpack(fac)
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if svd is None:
        svd = svd_bidiagonal(B)
    y = svd.V @ tikhonov_coefficients(svd, theta1, lam)
    return ProjectedTikhonovSolution(float(lam), y, svd)


def _projected_data(svd, theta1):
    return theta1 * svd.U[0, :]


def wgcv_function(lam, bhat, s, omega):
    """``(k+1) ||(I - B B_lam^+) c||^2 / trace(I - omega B B_lam^+)^2``.

    ``bhat = U^T c`` has length ``k+1``; ``s`` holds the ``k`` singular values.
    Vectorized over ``lam``.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))[:, None]
    k = s.size
    s2 = s ** 2
    filt = s2 / (s2 + lam ** 2)
    res = np.sum(((1 - filt) * bhat[:k]) ** 2, axis=1) + np.sum(bhat[k:] ** 2)
    trace = (k + 1) - omega * np.sum(filt, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        G = (k + 1) * res / trace ** 2
    G[trace <= 0] = np.inf
    return G


def minimize_log_scalar(f, lo, hi, n_grid=50, tol=1e-4, max_iter=100):
    """Minimize ``f`` over ``[lo, hi]``: log grid scan, then a bounded search in log space.

    ``f`` must accept an array. Returns ``(argmin, min)``.
    """
    grid = np.geomspace(lo, hi, n_grid)
    vals = f(grid)
    i = int(np.argmin(vals))
    a = math.log(grid[max(i - 1, 0)])
    b = math.log(grid[min(i + 1, n_grid - 1)])
    res = minimize_scalar(lambda t: float(f(np.exp([t]))[0]), bounds=(a, b),
                          method="bounded", options={"xatol": tol, "maxiter": max_iter})
    if res.fun < vals[i]:
        return float(math.exp(res.x)), float(res.fun)
    return float(grid[i]), float(vals[i])


@dataclass
class LambdaChoice:
    lam: float
    value: float
    flag: str = ""


def wgcv_select(fac, omega, svd=None):
    """Weighted-GCV choice of ``lam`` on the projected problem."""
    B, theta1 = _unpack(fac)
    if svd is None:
        svd = svd_bidiagonal(B)
    s = svd.S
    if not omega > 0:
        return LambdaChoice(0.0, math.nan, "degenerate-weight")
    bhat = _projected_data(svd, theta1)
    s1 = float(s[0])
    lo, hi = 1e-12 * s1, 10 * s1
    G = lambda lam: wgcv_function(lam, bhat, s, omega)
    probe = G(np.geomspace(lo, hi, 50))
    finite = probe[np.isfinite(probe)]
    if finite.size == 0:
        return LambdaChoice(0.0, math.nan, "degenerate-denominator")
    if finite.max() - finite.min() <= 1e-14 * max(abs(finite.max()), 1e-300):
        return LambdaChoice(0.0, float(finite.min()), "flat")
    lam, val = minimize_log_scalar(G, lo, hi)
    return LambdaChoice(lam, val)


def gcv_select(fac, svd=None):
    return wgcv_select(fac, 1.0, svd)


def adaptive_weight(bhat, s):
    """Weight that puts a W-GCV stationary point at ``lam = s[-1]``."""
    k = s.size
    lam = float(s[-1])
    s2 = s ** 2
    d = s2 + lam ** 2
    b = bhat[:k]
    tail = float(np.sum(bhat[k:] ** 2))
    res = float(np.sum((lam ** 2 / d * b) ** 2)) + tail
    dres = 4 * lam ** 3 * float(np.sum(s2 * b ** 2 / d ** 3))
    tr = float(np.sum(s2 / d))
    dtr = -2 * lam * float(np.sum(s2 / d ** 2))
    denom = dres * tr - 2 * res * dtr
    if not denom > 0:
        return 1.0
    return (k + 1) * dres / denom


@dataclass
class HybridResult:
    x: np.ndarray
    k: int
    lambdas: list
    ys: list = field(repr=False)
    residuals: list = field(repr=False)
    solution_norms: list = field(repr=False)
    omegas: list = field(repr=False)
    reason: str
    factorization: object = field(repr=False)

    def solution(self, k):
        """Hybrid iterate of iteration ``k`` (1-based)."""
        return self.factorization.W[:, :k] @ self.ys[k - 1]

    def trace_rows(self):
        return [(k, lam, r, sn) for k, (lam, r, sn) in
                enumerate(zip(self.lambdas, self.residuals, self.solution_norms), 1)]


def hybrid_run(A, b, k_max, selector="wgcv", stagnation_tol=1e-6, stagnation_p=5,
               stop_on_stagnation=True, tol=1e-12):
    """Hybrid bidiagonalization-Tikhonov iteration.

    ``selector`` is ``"wgcv"`` (adaptive weight), ``"gcv"``, or a callable
    ``(B, theta1, svd) -> lam``. Iteration ends at ``k_max``, on breakdown, or
    when the relative change of the regularized residual stays below
    ``stagnation_tol`` for ``stagnation_p`` iterations.
    """
    fac = BidiagFactorization(A, b, k_max, tol)
    lambdas, ys, residuals, norms, omegas = [], [], [], [], []
    omega_hist = []
    reason = "max-iter"
    count = 0
    while fac.step():
        B, theta1 = fac.B, fac.theta1
        svd = svd_bidiagonal(B)
        if callable(selector):
            lam = float(selector(B, theta1, svd))
            omega = math.nan
        elif selector == "gcv":
            lam = gcv_select((B, theta1), svd).lam
            omega = 1.0
        elif selector == "wgcv":
            omega_hist.append(min(1.0, adaptive_weight(_projected_data(svd, theta1), svd.S)))
            omega = float(np.mean(omega_hist))
            lam = wgcv_select((B, theta1), omega, svd).lam
        else:
            raise ValueError(f"unknown selector {selector!r}")
        sol = tikhonov_projected((B, theta1), lam, svd)
        res = sol.residual_norm(B, theta1)
        lambdas.append(lam)
        ys.append(sol.y)
        residuals.append(res)
        norms.append(float(np.linalg.norm(sol.y)))
        omegas.append(omega)
        if len(residuals) >= 2 and residuals[-2] > 0:
            change = abs(residuals[-2] - res) / residuals[-2]
            count = count + 1 if change <= stagnation_tol else 0
            if stop_on_stagnation and count >= stagnation_p:
                reason = "leveled-off"
                break
    if fac.k == 0:
        raise ArithmeticError("bidiagonalization broke down before the first iteration")
    if reason == "max-iter" and fac.breakdown:
        reason = "breakdown"
    x = fac.W @ ys[-1]
    return HybridResult(x, fac.k, lambdas, ys, residuals, norms, omegas, reason, fac)


def pls_from_bidiagonal(B, theta1):
    """Least-squares solution of ``min ||theta1 e1 - B y||`` (reference helper)."""
    k = B.shape[1]
    qr = GivensQR(theta1)
    for j in range(k):
        rho_next = B[j + 1, j + 1] if j + 1 < k else 0.0
        qr.add_column(B[j, j], B[j + 1, j], rho_next)
    return qr.solve()


def direct_tikhonov(A, b, lam, svd=None):
    """Dense Tikhonov solution ``sum_j s_j / (s_j^2 + lam^2) (u_j . b) v_j``."""
    A = np.asarray(A, dtype=float)
    if svd is None:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    else:
        U, s, Vt = svd.U, svd.S, svd.V.T
    beta = U[:, : s.size].T @ b
    return Vt[: s.size].T @ (s / (s ** 2 + lam ** 2) * beta)


def df_lambda_select(A, b, b_hat, lambdas):
    """Grid value of ``lam`` minimizing ``||b_hat - A x(lam)||^2``.

    ``x(lam)`` is the Tikhonov solution for the noisy data ``b``. Returns
    ``(lam, distances)``.
    """
    A = np.asarray(A, dtype=float)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    svd = SvdTriple(U, s, Vt.T)
    dist = np.array([np.sum((b_hat - A @ direct_tikhonov(A, b, lam, svd)) ** 2)
                     for lam in lambdas])
    return float(np.asarray(lambdas)[int(np.argmin(dist))]), dist
