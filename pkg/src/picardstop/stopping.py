"""Online stopping rules for projected least-squares iterations.

Every rule consumes one scalar (or pair) per iteration through
:meth:`StoppingRule.observe` and returns a :class:`StoppingDecision` once it
decides to stop, ``None`` otherwise. Decisions depend only on the observed
prefix, so replaying a recorded trace reproduces them exactly.

Iteration numbers ``k`` are 1-based throughout.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .gkb import iterate_pls
from .operators import dft2, unvec

__all__ = [
    "StoppingDecision",
    "StoppingRule",
    "DataFilteringRule",
    "LCurveRule",
    "NcpRule",
    "DiscrepancyRule",
    "LCurveCorner",
    "lcurve_corner",
    "ncp_vector",
    "ncp_distance",
    "projected_residual",
    "SolveResult",
    "solve",
    "write_trace_csv",
]

DEFAULT_DELTA = 2e-3
DEFAULT_P = 5


@dataclass
class StoppingDecision:
    stop_iteration: int
    selected_iteration: int
    reason: str
    trace: list = field(default_factory=list, repr=False)


class StoppingRule:
    """Common bookkeeping: consecutive iterations and the value trace."""

    name = "rule"

    def __init__(self):
        self.trace = []
        self.decision = None

    @property
    def k(self):
        return len(self.trace)

    def observe(self, k, value):
        if self.decision is not None:
            return self.decision
        if k != self.k + 1:
            raise ValueError(f"expected iteration {self.k + 1}, got {k}")
        self.trace.append(value)
        self.decision = self._update(k, value)
        return self.decision

    def update(self, fac, iterate):
        """Observe the iterate produced by a live factorization."""
        return self.observe(iterate.k, self.value(fac, iterate))

    def value(self, fac, iterate):
        raise NotImplementedError

    def _update(self, k, value):
        raise NotImplementedError

    def _best(self):
        return int(np.argmin(self.trace)) + 1

    def finalize(self, reason="max-iter"):
        """Decision when the iteration ends without the rule firing."""
        if self.decision is not None:
            return self.decision
        if not self.trace:
            raise ValueError("no iterations observed")
        self.decision = StoppingDecision(self.k, self._best(), reason, list(self.trace))
        return self.decision


def projected_residual(fac, iterate):
    """``b - A x_k`` through ``Z_{k+1} (theta_1 e_1 - B_k y_k)``."""
    Bk = fac.B
    r = -(Bk @ iterate.y)
    r[0] += fac.theta1
    return fac.Z @ r


class DataFilteringRule(StoppingRule):
    """Stop when ``f(k) = ||b_hat - A x_k||^2`` stops decreasing.

    The run ends once ``(f(k) - f(k+1)) / f(k) <= delta`` has held for ``p``
    consecutive ``k``; the numerator is signed, so any increase counts. The
    selected iterate is the first minimizer of the observed ``f``.
    """

    name = "df"

    def __init__(self, b_hat=None, delta=DEFAULT_DELTA, p=DEFAULT_P):
        super().__init__()
        if delta <= 0:
            raise ValueError("delta must be positive")
        if p < 1:
            raise ValueError("p must be at least 1")
        self.b_hat = None if b_hat is None else np.asarray(b_hat, dtype=float)
        self.delta = float(delta)
        self.p = int(p)
        self._count = 0

    def value(self, fac, iterate):
        # A x_k = Z_{k+1} B_k y_k by the factorization identity
        return float(np.sum((self.b_hat - fac.Z @ (fac.B @ iterate.y)) ** 2))

    def _update(self, k, f):
        if f == 0.0:
            return StoppingDecision(k, k, "minimum-found", list(self.trace))
        if k >= 2:
            prev = self.trace[-2]
            if (prev - f) / prev <= self.delta:
                self._count += 1
            else:
                self._count = 0
            if self._count >= self.p:
                best = self._best()
                after = self.trace[best:]
                reason = "minimum-found" if after and min(after) > self.trace[best - 1] \
                    else "leveled-off"
                return StoppingDecision(k, best, reason, list(self.trace))
        return None


@dataclass
class LCurveCorner:
    index: int
    low_confidence: bool = False
    candidates: tuple = ()


def _turn_angles(Q):
    """Signed turning angle at each interior vertex (negative = clockwise)."""
    seg = np.diff(Q, axis=0)
    u, v = seg[:-1], seg[1:]
    cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    dot = np.sum(u * v, axis=1)
    return np.arctan2(cross, dot)


def _sharpest_clockwise(Q):
    if len(Q) < 3:
        return None
    ang = _turn_angles(Q)
    i = int(np.argmin(ang))
    return i + 1 if ang[i] < 0 else None


def lcurve_corner(points):
    """Corner of a discrete L-curve given as ``(log||r_k||, log||x_k||)`` pairs.

    Candidates come from pruned versions of the curve that keep only its
    ``p`` longest segments (``p = 5, 10, 20, ...`` up to all of them); on
    each pruned curve the vertex with the sharpest clockwise turn is a
    candidate. The corner is the candidate lying farthest on the clockwise
    side of the chord joining the first and last points. With no clockwise
    turn anywhere (e.g. collinear points) index 1 is returned flagged
    ``low_confidence``.

    Returns ``None`` for fewer than 4 points. Indices are 0-based.
    """
    P = np.asarray(points, dtype=float)
    n = len(P)
    if n < 4:
        return None
    scale = float(np.max(np.ptp(P, axis=0)))
    if not np.isfinite(scale) or scale == 0.0:
        return LCurveCorner(1, True)
    keep = [0]
    for i in range(1, n):
        if np.linalg.norm(P[i] - P[keep[-1]]) > 1e-12 * scale:
            keep.append(i)
    keep = np.asarray(keep)
    Q = P[keep]
    if len(Q) < 3:
        return LCurveCorner(1, True)
    length = np.linalg.norm(np.diff(Q, axis=0), axis=1)
    nseg = length.size
    order = np.argsort(-length, kind="stable")
    candidates = set()
    p = min(5, nseg)
    while True:
        longest = order[:p]
        verts = np.unique(np.concatenate([longest, longest + 1, [0, len(Q) - 1]]))
        c = _sharpest_clockwise(Q[verts])
        if c is not None:
            candidates.add(int(verts[c]))
        if p >= nseg:
            break
        p = min(2 * p, nseg)
    if not candidates:
        return LCurveCorner(1, True)
    cand = sorted(candidates)
    a, b = Q[0], Q[-1]
    chord = b - a
    # the corner of an L traversed this way lies left of the first-to-last chord
    side = [chord[0] * (Q[i][1] - a[1]) - chord[1] * (Q[i][0] - a[0]) for i in cand]
    best = cand[int(np.argmax(side))]
    return LCurveCorner(int(keep[best]), False, tuple(int(keep[i]) for i in cand))


class LCurveRule(StoppingRule):
    """Recompute the L-curve corner each iteration.

    Stops once the corner has stayed put or moved back for ``p`` consecutive
    iterations; the final corner is the selected iterate.
    """

    name = "lcurve"

    def __init__(self, p=DEFAULT_P):
        super().__init__()
        self.p = int(p)
        self.corners = []
        self._count = 0

    def value(self, fac, iterate):
        return (float(iterate.residual_norm), float(iterate.solution_norm))

    def _update(self, k, value):
        pts = np.log(np.maximum(np.asarray(self.trace, dtype=float), np.finfo(float).tiny))
        corner = lcurve_corner(pts)
        self.corners.append(None if corner is None else corner.index + 1)
        if corner is None or len(self.corners) < 2 or self.corners[-2] is None:
            return None
        if self.corners[-1] <= self.corners[-2]:
            self._count += 1
        else:
            self._count = 0
        if self._count >= self.p:
            return StoppingDecision(k, self.corners[-1], "minimum-found", list(self.trace))
        return None

    def _best(self):
        last = self.corners[-1] if self.corners else None
        return last if last is not None else self.k


def ncp_vector(R, include_dc=False):
    """Normalized cumulative periodogram of a residual image.

    Amplitudes ``|DFT2(R)|`` on the quarter ``[0, M//2] x [0, N//2]`` are put
    in order of increasing frequency magnitude and cumulatively summed.
    Returns ``(c, flat)``; ``flat`` is True for a zero residual, in which case
    ``c`` is the white-noise straight line.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim == 1:
        R = R[:, None]
    M, N = R.shape
    q1, q2 = M // 2 + 1, N // 2 + 1
    T = np.abs(dft2(R))[:q1, :q2]
    keys = ((np.arange(q1) / M) ** 2)[:, None] + ((np.arange(q2) / N) ** 2)[None, :]
    t = T.reshape(-1, order="F")[np.argsort(keys.reshape(-1, order="F"), kind="stable")]
    if not include_dc:
        t = t[1:]
    L = t.size
    total = t.sum()
    if L == 0 or total == 0.0:
        return np.arange(1, L + 1) / max(L, 1), True
    return np.cumsum(t) / total, False


def ncp_distance(R, include_dc=False):
    """``||s - c||_1`` with ``s`` the white-noise line ``j / L``."""
    c, _ = ncp_vector(R, include_dc)
    s = np.arange(1, c.size + 1) / c.size
    return float(np.abs(s - c).sum())


class NcpRule(StoppingRule):
    """Stop after the NCP distance has grown ``p`` times in a row; select its minimum."""

    name = "ncp"

    def __init__(self, image_shape, p=DEFAULT_P, include_dc=False):
        super().__init__()
        self.image_shape = tuple(image_shape)
        self.p = int(p)
        self.include_dc = include_dc
        self._count = 0

    def value(self, fac, iterate):
        r = projected_residual(fac, iterate)
        return ncp_distance(unvec(r, *self.image_shape), self.include_dc)

    def _update(self, k, value):
        if k >= 2:
            self._count = self._count + 1 if value > self.trace[-2] else 0
            if self._count >= self.p:
                return StoppingDecision(k, self._best(), "minimum-found", list(self.trace))
        return None


class DiscrepancyRule(StoppingRule):
    """Stop at the first ``k`` with ``||r_k|| <= tau * sqrt(m) * s``."""

    name = "discrepancy"

    def __init__(self, noise_std, m, tau=1.01):
        super().__init__()
        self.threshold = float(tau) * math.sqrt(m) * float(noise_std)

    def value(self, fac, iterate):
        return float(iterate.residual_norm)

    def _update(self, k, value):
        if value <= self.threshold:
            return StoppingDecision(k, k, "minimum-found", list(self.trace))
        return None

    def _best(self):
        return self.k


@dataclass
class SolveResult:
    x: np.ndarray
    decision: StoppingDecision
    factorization: object = field(repr=False)
    iterates: list = field(repr=False, default_factory=list)


def solve(A, b, rule, k_max=None):
    """Run projected least squares under ``rule``; return the selected iterate.

    ``iterates`` holds the projected solutions ``y_k`` of every iteration.
    Raises ``ArithmeticError`` if the process breaks down before iteration 1.
    """
    ys = []
    fac = None
    decision = None
    for fac, it in iterate_pls(A, b, k_max):
        ys.append(it.y.copy())
        decision = rule.update(fac, it)
        if decision is not None:
            break
    if fac is None:
        raise ArithmeticError("bidiagonalization broke down before the first iteration")
    if decision is None:
        decision = rule.finalize("breakdown" if fac.breakdown else "max-iter")
    ks = decision.selected_iteration
    x = fac.W[:, :ks] @ ys[ks - 1]
    return SolveResult(x, decision, fac, ys)


def write_trace_csv(path, decision, header="criterion_value"):
    """Write ``k,<value>`` rows; pair-valued traces get two value columns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        first = decision.trace[0] if decision.trace else 0.0
        if isinstance(first, tuple):
            w.writerow(["k", "residual_norm", "solution_norm"])
            for k, (a, b) in enumerate(decision.trace, 1):
                w.writerow([k, repr(a), repr(b)])
        else:
            w.writerow(["k", header])
            for k, v in enumerate(decision.trace, 1):
                w.writerow([k, repr(float(v))])
