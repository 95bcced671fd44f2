"""Picard-parameter data filtering in the DFT basis.

The Fourier coefficients of the periodic component of the data are put in
an order in which signal comes first and noise last. The Picard parameter
``k0`` is where the tail variance sequence levels off; coefficients from
position ``k0`` on are zeroed.

Two orderings are provided. ``elliptic`` sorts by squared frequency
magnitude, ``hyperbolic`` by the product of the per-axis absolute
frequencies, which is the sorted Kronecker product of the 1-D frequency
vectors. Both sorts are stable, so ties keep column-stacked index order.
For a 1-D signal the product would vanish identically, so there both
orderings sort by the folded frequency.

Positions ``k`` in the ordered sequence (``k0``, the ``k`` of ``V(k)``) are
1-based, as in the usual statement of the Picard condition. Array indices
are 0-based.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .operators import dft2, idft2, unvec, vec
from .pps import pps_decompose

__all__ = [
    "OrderingPermutation",
    "PicardEstimate",
    "FilterResult",
    "folded_frequencies",
    "elliptic_keys",
    "hyperbolic_keys",
    "hyperbolic_keys_componentwise",
    "elliptic_order",
    "hyperbolic_order",
    "ordering",
    "variance_sequence",
    "picard_parameter",
    "default_step",
    "ordering_step",
    "filter_data_2d",
    "filter_mask",
    "filter_data_svd",
]

DEFAULT_EPSILON = 1e-2


def default_step(m):
    """Default detection step ``h = ceil(m / 100)``."""
    return max(1, math.ceil(m / 100))


def ordering_step(kind, M, N, h=None):
    """Detection step used for a 2-D ordering.

    ``h=None`` means :func:`default_step`. The hyperbolic ordering starts
    with the ``M + N - 1`` axis coefficients, all with key 0. A step shorter
    than that block compares tail means inside it, where the order carries
    no spectral meaning, and detection fires far too early; for this
    ordering the step is raised to the block length.
    """
    m = M * N
    h = default_step(m) if h is None else int(h)
    if kind == "hyperbolic" and min(M, N) > 1:
        h = max(h, M + N - 1)
    return min(h, max(m - 1, 1))


@dataclass(frozen=True)
class OrderingPermutation:
    perm: np.ndarray
    kind: str
    dims: tuple
    keys: np.ndarray = field(repr=False)

    @property
    def inverse(self):
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv


@dataclass
class PicardEstimate:
    k0: int
    V: np.ndarray = field(repr=False)
    h: int
    epsilon: float
    skipped: list = field(default_factory=list, repr=False)
    detected: bool = True

    @property
    def noise_variance_estimate(self):
        return float(self.V[self.k0 - 1])


def folded_frequencies(n):
    """Absolute frequencies ``min(j, n - j) / n`` of the length-``n`` DFT."""
    j = np.arange(n)
    return np.minimum(j, n - j) / n


def elliptic_keys(M, N):
    """Squared frequency magnitude of each column-stacked coefficient."""
    fM, fN = folded_frequencies(M), folded_frequencies(N)
    return vec(fM[:, None] ** 2 + fN[None, :] ** 2)


def hyperbolic_keys(M, N):
    """Frequency products as a Kronecker product.

    The column-stacked index ``j + M*s`` runs fastest over the row index, so
    the key vector is ``kron(f_N, f_M)``.
    """
    return np.kron(folded_frequencies(N), folded_frequencies(M))


def hyperbolic_keys_componentwise(M, N, literal=False):
    """Frequency products written out case by case.

    Entry ``M*(j-1) + s`` (1-based, ``j`` over columns, ``s`` over rows) is
    ``a_j * b_s / (M*N)`` where ``a_j = j-1`` below the half-length and
    ``N-j+1`` above it (and likewise ``b_s``).

    With ``literal=True`` the half-length split is ``j <= floor(N/2)``. For odd
    lengths that misfolds the index ``floor(N/2) + 1``; the default split
    ``j - 1 <= floor(N/2)`` agrees with :func:`hyperbolic_keys` for all sizes.
    """
    out = np.empty(M * N)
    for j in range(1, N + 1):
        low_j = j <= N // 2 if literal else j - 1 <= N // 2
        a = (j - 1) if low_j else (N - j + 1)
        for s in range(1, M + 1):
            low_s = s <= M // 2 if literal else s - 1 <= M // 2
            b = (s - 1) if low_s else (M - s + 1)
            out[M * (j - 1) + s - 1] = (a / N) * (b / M)
    return out


@lru_cache(maxsize=64)
def _cached_order(M, N, kind):
    if kind == "elliptic":
        keys = elliptic_keys(M, N)
        perm = np.argsort(keys, kind="stable")
    elif kind == "hyperbolic":
        # a 1-D signal has no second axis to multiply by
        keys = hyperbolic_keys(M, N) if min(M, N) > 1 else folded_frequencies(M * N)
        perm = np.argsort(keys, kind="stable")
    else:
        raise ValueError(f"unknown ordering {kind!r}")
    perm.setflags(write=False)
    keys.setflags(write=False)
    return OrderingPermutation(perm, kind, (M, N), keys)


def elliptic_order(M, N):
    return _cached_order(int(M), int(N), "elliptic")


def hyperbolic_order(M, N):
    return _cached_order(int(M), int(N), "hyperbolic")


def ordering(kind, M, N):
    return _cached_order(int(M), int(N), kind)


def variance_sequence(beta):
    """Tail means ``V(k) = sum_{j>=k} |beta_j|^2 / (m - k + 1)``."""
    power = np.abs(np.asarray(beta)) ** 2
    m = power.size
    if m == 0:
        raise ValueError("empty coefficient vector")
    tails = np.cumsum(power[::-1])[::-1]
    return tails / np.arange(m, 0, -1)


def picard_parameter(V, h, epsilon=DEFAULT_EPSILON):
    """Smallest ``k`` with ``|V(k+h) - V(k)| / V(k) <= epsilon``.

    Positions where ``V(k) == 0`` are skipped and listed in ``skipped``. If no
    position qualifies, ``k0 = m`` with ``detected=False``; the filters then
    keep every coefficient.
    """
    V = np.asarray(V, dtype=float)
    m = V.size
    h = int(h)
    if not 1 <= h <= m - 1:
        raise ValueError(f"step h={h} must lie in [1, {m - 1}]")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    head, ahead = V[: m - h], V[h:]
    zero = head == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(ahead - head) / head
    ok = (rel <= epsilon) & ~zero
    hits = np.flatnonzero(ok)
    k0 = int(hits[0]) + 1 if hits.size else m
    skipped = [int(k) + 1 for k in np.flatnonzero(zero[:k0])]
    return PicardEstimate(k0, V, h, float(epsilon), skipped, bool(hits.size))


@dataclass
class FilterResult:
    filtered: np.ndarray
    estimate: PicardEstimate
    periodic: np.ndarray = field(repr=False)
    smooth: np.ndarray = field(repr=False)
    mask: np.ndarray = field(repr=False)

    @property
    def retained(self):
        return int(self.mask.sum())


def filter_mask(kind, M, N, k0):
    """Boolean ``M x N`` mask of coefficients kept for Picard parameter ``k0``."""
    order = ordering(kind, M, N)
    keep = np.zeros(M * N, dtype=bool)
    keep[order.perm[: k0 - 1]] = True
    return unvec(keep, M, N)


def filter_data_2d(B, kind="hyperbolic", h=None, epsilon=DEFAULT_EPSILON, k0=None):
    """Filter an image (or 1-D signal) by Picard truncation in the DFT basis.

    Returns a :class:`FilterResult`; ``filtered`` has the shape of ``B``.
    The step actually used is ``ordering_step(kind, M, N, h)``. Passing
    ``k0`` skips detection and truncates at that position.
    """
    B = np.asarray(B, dtype=float)
    one_d = B.ndim == 1
    img = B[:, None] if one_d else B
    M, N = img.shape
    m = M * N
    P, S = pps_decompose(img)
    order = ordering(kind, M, N)
    beta = vec(dft2(P))[order.perm]
    V = variance_sequence(beta)
    h = ordering_step(kind, M, N, h)
    if m == 1:
        estimate = PicardEstimate(1, V, 0, float(epsilon), detected=False)
    else:
        estimate = picard_parameter(V, h, epsilon)
    if k0 is not None:
        estimate.k0 = int(k0)
        estimate.detected = True
    kept = estimate.k0 - 1 if estimate.detected else m
    beta[kept:] = 0.0
    coeffs = np.empty(m, dtype=complex)
    coeffs[order.perm] = beta
    # splitting a conjugate pair at the cut leaves an imaginary part; keep the real part
    P_hat = idft2(unvec(coeffs, M, N), real=False).real
    out = P_hat + S
    mask = filter_mask(kind, M, N, kept + 1)
    if one_d:
        out, P, S, mask = out[:, 0], P[:, 0], S[:, 0], mask[:, 0]
    return FilterResult(out, estimate, P, S, mask)


def filter_data_svd(U, b, h=None, epsilon=DEFAULT_EPSILON, tol=1e-8):
    """Picard truncation in the basis of the columns of an orthogonal ``U``.

    Small dense reference path. Returns ``(b_hat, estimate)``.
    """
    U = np.asarray(U, dtype=float)
    b = np.asarray(b, dtype=float)
    m = b.size
    if U.shape != (m, m):
        raise ValueError(f"U must be {m}x{m}, got {U.shape}")
    if np.linalg.norm(U.T @ U - np.eye(m)) > tol * math.sqrt(m):
        raise ValueError("U is not orthogonal")
    beta = U.T @ b
    if h is None:
        h = default_step(m)
    estimate = picard_parameter(variance_sequence(beta), h, epsilon)
    kept = estimate.k0 - 1 if estimate.detected else m
    return U[:, :kept] @ beta[:kept], estimate
