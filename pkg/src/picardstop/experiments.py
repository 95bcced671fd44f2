"""Synthetic test problems, seeded noise and the multi-realization comparison.

A run takes one test problem, one noise level and one replicate seed,
builds a single bidiagonalization stream, and lets every stopping rule (and
the hybrid W-GCV method) observe that same stream. MSD-optimal iterations of
plain projected least squares and of projected Tikhonov serve as oracles.

Noise is drawn from a counter-based generator (splitmix64 finalizer over a
64-bit counter, Box-Muller for normals), so results are a pure function of
the configuration.
"""

import csv
import hashlib
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from .gkb import iterate_pls
from .hybrid import (adaptive_weight, svd_bidiagonal, tikhonov_coefficients,
                     wgcv_select)
from .operators import Blur2D, DenseOperator, KroneckerOperator, LinearOperator, unvec, vec
from .spectral_filter import DEFAULT_EPSILON, filter_data_2d
from .stopping import (DataFilteringRule, DiscrepancyRule, LCurveRule, NcpRule,
                       ncp_distance)

__all__ = [
    "TestProblem",
    "NoiseSpec",
    "RunRecord",
    "ExperimentConfig",
    "RunTrace",
    "gaussian_psf",
    "motion_psf",
    "test_image",
    "gen_problem",
    "counter_normals",
    "run_seed",
    "add_noise",
    "msd",
    "compute_trace",
    "optimal_iteration",
    "trace_optimum",
    "run_single",
    "run_experiment",
    "records_to_csv",
    "summary_to_csv",
    "RESULTS_HEADER",
    "METHODS",
]

RESULTS_HEADER = ["problem", "method", "ordering", "alpha", "seed", "stop_iter",
                  "selected_iter", "opt_iter", "msd_selected", "msd_opt", "wall_time_ms"]

# config name -> (CSV method, CSV ordering)
METHODS = {
    "df-h": ("df", "hyperbolic"),
    "df-e": ("df", "elliptic"),
    "lcurve": ("lcurve", "none"),
    "ncp": ("ncp", "none"),
    "discrepancy": ("discrepancy", "none"),
    "wgcv": ("wgcv", "none"),
}


# ---------------------------------------------------------------------------
# test problems


@dataclass
class TestProblem:
    __test__ = False  # not a pytest class

    name: str
    A: object
    x_true: np.ndarray
    dims: tuple
    notes: str = ""

    @property
    def b_true(self):
        return self.A.apply(self.x_true)


def gaussian_psf(sigma, radius=None):
    """Normalized Gaussian truncated at ``radius`` (default ``ceil(3 sigma)``)."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if radius is None:
        radius = int(math.ceil(3 * sigma))
    if sigma == 0 or radius == 0:
        return np.ones((1, 1))
    t = np.arange(-radius, radius + 1)
    g = np.exp(-0.5 * (t / sigma) ** 2)
    psf = np.outer(g, g)
    return psf / psf.sum()


def motion_psf(length, angle=0.0):
    """Normalized line of ``length`` pixels at ``angle`` degrees."""
    if length < 1:
        raise ValueError("motion length must be at least 1")
    r = (length - 1) / 2
    size = 2 * int(math.ceil(r)) + 1
    psf = np.zeros((size, size))
    c = size // 2
    theta = math.radians(angle)
    for t in np.linspace(-r, r, 8 * int(length) + 1):
        i = int(round(c - t * math.sin(theta)))
        j = int(round(c + t * math.cos(theta)))
        psf[i, j] += 1.0
    return psf / psf.sum()


def test_image(M, N):
    """Deterministic piecewise-smooth scene in ``[0, 1]``.

    Rectangles, disks, a smooth bump and a few point sources placed at fixed
    relative positions, so the scene rescales with the grid.
    """
    y = (np.arange(M) + 0.5)[:, None] / M
    x = (np.arange(N) + 0.5)[None, :] / N
    img = np.zeros((M, N))
    img += 0.35 * ((y > 0.10) & (y < 0.45) & (x > 0.12) & (x < 0.55))
    img += 0.25 * ((y > 0.55) & (y < 0.92) & (x > 0.40) & (x < 0.88))
    img += 0.45 * (((y - 0.30) ** 2 + (x - 0.75) ** 2) < 0.14 ** 2)
    img += 0.30 * (((y - 0.72) ** 2 + (x - 0.22) ** 2) < 0.10 ** 2)
    img += 0.25 * np.exp(-((y - 0.5) ** 2 + (x - 0.5) ** 2) / (2 * 0.2 ** 2))
    for py, px in ((0.18, 0.88), (0.82, 0.10), (0.62, 0.62)):
        img[min(int(py * M), M - 1), min(int(px * N), N - 1)] += 0.8
    img -= img.min()
    return img / img.max()


def _gaussian_toeplitz(n, sigma):
    t = np.arange(n)
    col = np.exp(-0.5 * (t / sigma) ** 2)
    T = toeplitz(col)
    return T / T.sum(axis=1).max()


def _parse_size(size):
    if isinstance(size, (tuple, list)):
        return int(size[0]), int(size[1])
    return int(size), int(size)


test_image.__test__ = False  # keep pytest from collecting it


def gen_problem(kind, size=64, **params):
    """Build a named synthetic test problem.

    kinds
    -----
    ``gaussian_blur``
        Truncated Gaussian PSF, ``sigma`` (default 2.0), ``boundary``
        (default ``"zero"``).
    ``motion_blur``
        Line PSF of ``length`` (default 9) at ``angle`` degrees.
    ``separable_kron``
        ``A1 (x) A2`` with Gaussian Toeplitz factors of widths ``sigma1``,
        ``sigma2``.
    ``dense_1d``
        Gravity-surveying kernel ``d (d^2 + (s-t)^2)^(-3/2)`` by midpoint
        quadrature on ``size`` points, depth ``d`` (default 0.25).
    """
    if kind == "gaussian_blur":
        M, N = _parse_size(size)
        sigma = float(params.get("sigma", 2.0))
        boundary = params.get("boundary", "zero")
        A = Blur2D(gaussian_psf(sigma), (M, N), boundary)
        return TestProblem(kind, A, vec(test_image(M, N)), (M, N),
                           f"gaussian sigma={sigma} boundary={boundary}")
    if kind == "motion_blur":
        M, N = _parse_size(size)
        length = int(params.get("length", 9))
        angle = float(params.get("angle", 0.0))
        boundary = params.get("boundary", "zero")
        A = Blur2D(motion_psf(length, angle), (M, N), boundary)
        return TestProblem(kind, A, vec(test_image(M, N)), (M, N),
                           f"motion length={length} angle={angle} boundary={boundary}")
    if kind == "separable_kron":
        M, N = _parse_size(size)
        s1 = float(params.get("sigma1", 1.5))
        s2 = float(params.get("sigma2", 2.5))
        A = KroneckerOperator(_gaussian_toeplitz(N, s1), _gaussian_toeplitz(M, s2))
        return TestProblem(kind, A, vec(test_image(M, N)), (M, N),
                           f"kronecker sigma1={s1} sigma2={s2}")
    if kind == "dense_1d":
        n = int(size if not isinstance(size, (tuple, list)) else size[0])
        if n < 2:
            raise ValueError("dense_1d needs at least 2 points")
        d = float(params.get("d", 0.25))
        t = (np.arange(n) + 0.5) / n
        K = d * (d ** 2 + (t[:, None] - t[None, :]) ** 2) ** -1.5 / n
        x = np.sin(np.pi * t) + 0.5 * np.sin(2 * np.pi * t)
        return TestProblem(kind, DenseOperator(K), x, (n, 1), f"gravity d={d}")
    raise ValueError(f"unknown problem kind {kind!r}")


# ---------------------------------------------------------------------------
# seeded noise

_GOLDEN64 = np.uint64(0x9E3779B97F4A7C15)


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _uniforms(seed, count):
    """Uniforms in ``(0, 1]`` from counters ``1..count`` of a splitmix64 stream."""
    with np.errstate(over="ignore"):
        ctr = np.arange(1, count + 1, dtype=np.uint64)
        words = _mix64(np.uint64(seed) + ctr * _GOLDEN64)
    return ((words >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53


def counter_normals(seed, n):
    """``n`` standard normals by Box-Muller on the counter-based uniforms."""
    pairs = (n + 1) // 2
    u = _uniforms(int(seed) & 0xFFFFFFFFFFFFFFFF, 2 * pairs)
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    ang = 2.0 * np.pi * u[1::2]
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(ang)
    z[1::2] = r * np.sin(ang)
    return z[:n]


def run_seed(master_seed, problem, alpha, replicate):
    """64-bit seed for one replicate, from a BLAKE2b digest of its key."""
    key = f"{int(master_seed)}|{problem}|{float(alpha)!r}|{int(replicate)}".encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class NoiseSpec:
    alpha: float
    seed: int

    def std(self, b_true):
        return math.sqrt(self.alpha * float(np.max(np.abs(b_true))) ** 2)


def add_noise(b_true, spec):
    """``b_true`` plus white Gaussian noise of variance ``alpha * max|b_true|^2``."""
    b_true = np.asarray(b_true, dtype=float)
    s = spec.std(b_true)
    if s == 0.0:
        return b_true.copy()
    return b_true + s * counter_normals(spec.seed, b_true.size)


def msd(x, x_true):
    """Mean-square deviation ``||x_true - x||^2 / ||x_true||^2``."""
    x_true = np.asarray(x_true, dtype=float)
    ref = float(np.sum(x_true ** 2))
    if ref == 0.0:
        raise ValueError("x_true is zero")
    return float(np.sum((x_true - np.asarray(x, dtype=float)) ** 2)) / ref


# ---------------------------------------------------------------------------
# one shared iteration stream


@dataclass
class RunTrace:
    """Everything observed along one bidiagonalization stream (index k-1)."""

    residual: list = field(default_factory=list)
    solution_norm: list = field(default_factory=list)
    msd_pls: list = field(default_factory=list)
    df: dict = field(default_factory=dict)
    ncp: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    msd_wgcv: list = field(default_factory=list)
    msd_tikh: list = field(default_factory=list)
    times: dict = field(default_factory=dict)
    breakdown: bool = False

    @property
    def k(self):
        return len(self.residual)


def _tikh_msd_curve(F, g, xt2):
    """MSD of ``y = V F`` for each row of ``F`` given ``g = V^T W^T x_true``."""
    # the expanded form can dip below zero by rounding near an exact solution
    return np.maximum(xt2 - 2 * F @ g + np.sum(F ** 2, axis=1), 0.0) / xt2


def compute_trace(problem, b, k_max, orderings=("hyperbolic", "elliptic"),
                  h=None, epsilon=DEFAULT_EPSILON, with_ncp=True, with_hybrid=True,
                  tikh_grid=60):
    """Run the bidiagonalization once and record every criterion's input."""
    M, N = problem.dims
    m = M * N
    x_true = problem.x_true
    xt2 = float(np.sum(x_true ** 2))
    tr = RunTrace()
    t_filter = {}
    b_hat = {}
    for kind in orderings:
        t0 = time.perf_counter()
        res = filter_data_2d(unvec(b, M, N), kind, h, epsilon)
        b_hat[kind] = vec(res.filtered)
        t_filter[kind] = time.perf_counter() - t0
        tr.df[kind] = []
    times = {key: 0.0 for key in ("pls", "ncp", "hybrid", "tikh")}
    times.update({f"df-{kind}": t for kind, t in t_filter.items()})
    omega_hist = []
    Wtx = []
    for fac, it in iterate_pls(problem.A, b, k_max):
        t0 = time.perf_counter()
        k = it.k
        tr.residual.append(it.residual_norm)
        tr.solution_norm.append(it.solution_norm)
        # ||x_true - W y||^2 = ||x_true||^2 - 2 (W^T x_true).y + ||y||^2
        Wtx.append(float(fac.W[:, k - 1] @ x_true))
        c = np.asarray(Wtx)
        tr.msd_pls.append(max(xt2 - 2 * c @ it.y + it.y @ it.y, 0.0) / xt2)
        times["pls"] += time.perf_counter() - t0
        Bk = fac.B
        Axk = fac.Z @ (Bk @ it.y)
        for kind in orderings:
            t0 = time.perf_counter()
            tr.df[kind].append(float(np.sum((b_hat[kind] - Axk) ** 2)))
            times[f"df-{kind}"] += time.perf_counter() - t0
        if with_ncp:
            t0 = time.perf_counter()
            tr.ncp.append(ncp_distance(unvec(b - Axk, M, N)))
            times["ncp"] += time.perf_counter() - t0
        if with_hybrid:
            t0 = time.perf_counter()
            svd = svd_bidiagonal(Bk)
            theta1 = fac.theta1
            omega_hist.append(min(1.0, adaptive_weight(theta1 * svd.U[0, :], svd.S)))
            lam = wgcv_select((Bk, theta1), float(np.mean(omega_hist)), svd).lam
            tr.lambdas.append(lam)
            g = svd.V.T @ c
            f_w = tikhonov_coefficients(svd, theta1, lam)
            tr.msd_wgcv.append(float(_tikh_msd_curve(f_w[None, :], g, xt2)[0]))
            times["hybrid"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            s1 = float(svd.S[0])
            lams = np.concatenate([[0.0, lam], np.geomspace(1e-6 * s1, 10 * s1, tikh_grid)])
            F = np.stack([tikhonov_coefficients(svd, theta1, lv) for lv in lams])
            tr.msd_tikh.append(float(np.min(_tikh_msd_curve(F, g, xt2))))
            times["tikh"] += time.perf_counter() - t0
        tr.breakdown = fac.breakdown
    tr.times = times
    return tr


def trace_optimum(trace, kind="pls"):
    """``(k_opt, msd_opt)`` of the PLS or the grid-optimal Tikhonov trace."""
    values = trace.msd_pls if kind == "pls" else trace.msd_tikh
    i = int(np.argmin(values))
    return i + 1, float(values[i])


def optimal_iteration(A, b, x_true, k_max=None, dims=None):
    """MSD-optimal iterations of projected least squares and of projected Tikhonov.

    Returns ``{"pls": (k, msd), "tikh": (k, msd)}``; the Tikhonov entry
    minimizes over a grid of ``lambda`` at every ``k``.
    """
    A = A if isinstance(A, LinearOperator) else DenseOperator(A)
    x_true = np.asarray(x_true, dtype=float)
    dims = dims or (A.shape[0], 1)
    problem = TestProblem("custom", A, x_true, tuple(dims))
    if k_max is None:
        k_max = min(A.shape)
    trace = compute_trace(problem, np.asarray(b, dtype=float), k_max, orderings=(),
                          with_ncp=False)
    return {"pls": trace_optimum(trace, "pls"), "tikh": trace_optimum(trace, "tikh")}


def _replay(rule, values):
    for k, v in enumerate(values, 1):
        decision = rule.observe(k, v)
        if decision is not None:
            return decision
    return rule.finalize("max-iter")


@dataclass
class RunRecord:
    problem: str
    method: str
    ordering: str
    alpha: float
    seed: int
    stop_iter: int
    selected_iter: int
    opt_iter: int
    msd_selected: float
    msd_opt: float
    wall_time_ms: float = 0.0
    reason: str = ""

    def row(self):
        return [self.problem, self.method, self.ordering, repr(float(self.alpha)),
                str(self.seed), str(self.stop_iter), str(self.selected_iter),
                str(self.opt_iter), repr(float(self.msd_selected)),
                repr(float(self.msd_opt)), repr(float(self.wall_time_ms))]


@dataclass
class ExperimentConfig:
    problems: tuple = ("gaussian_blur",)
    methods: tuple = tuple(METHODS)
    alphas: tuple = (1e-2, 1e-4, 1e-6)
    seeds: int = 20
    master_seed: int = 20240601
    k_max: int = 150
    image_size: int = 64
    blur_sigma: float = 2.0
    boundary: str = "zero"
    delta: float = 2e-3
    p: int = 5
    epsilon: float = DEFAULT_EPSILON
    h: int = 0  # 0 means the ordering's default step
    tau: float = 1.01
    record_timing: bool = False


def _problem_from_config(name, cfg):
    params = {}
    if name == "gaussian_blur":
        params = {"sigma": cfg.blur_sigma, "boundary": cfg.boundary}
    elif name == "motion_blur":
        params = {"boundary": cfg.boundary}
    size = cfg.image_size
    if name == "separable_kron":
        size = min(size, 32)
    return gen_problem(name, size, **params)


def run_single(problem, alpha, seed, methods=tuple(METHODS), k_max=150, delta=2e-3,
               p=5, epsilon=DEFAULT_EPSILON, h=None, tau=1.01, record_timing=False):
    """All requested methods on one noise realization. Returns ``(records, trace)``."""
    b_true = problem.b_true
    spec = NoiseSpec(alpha, seed)
    b = add_noise(b_true, spec)
    s = spec.std(b_true)
    M, N = problem.dims
    m = M * N
    k_max = min(k_max, m, problem.A.shape[1])
    orderings = tuple(METHODS[mth][1] for mth in methods if mth.startswith("df-"))
    trace = compute_trace(problem, b, k_max, orderings, h, epsilon,
                          with_ncp="ncp" in methods, with_hybrid="wgcv" in methods)
    k_pls, msd_pls_opt = trace_optimum(trace, "pls")
    records = []
    for mth in methods:
        method, ordering = METHODS[mth]
        t0 = time.perf_counter()
        if method == "df":
            dec = _replay(DataFilteringRule(None, delta, p), trace.df[ordering])
            base = trace.times[f"df-{ordering}"]
        elif method == "lcurve":
            dec = _replay(LCurveRule(p), list(zip(trace.residual, trace.solution_norm)))
            base = trace.times["pls"]
        elif method == "ncp":
            dec = _replay(NcpRule((M, N), p), trace.ncp)
            base = trace.times["ncp"]
        elif method == "discrepancy":
            dec = _replay(DiscrepancyRule(s, m, tau), trace.residual)
            base = trace.times["pls"]
        else:
            base = trace.times["hybrid"]
        elapsed = time.perf_counter() - t0 + base
        if method == "wgcv":
            k_sel = trace.k
            k_tikh, msd_tikh_opt = trace_optimum(trace, "tikh")
            rec = RunRecord(problem.name, method, ordering, alpha, seed, trace.k, k_sel,
                            k_tikh, trace.msd_wgcv[k_sel - 1], msd_tikh_opt)
            rec.reason = "breakdown" if trace.breakdown else "max-iter"
        else:
            ks = dec.selected_iteration
            rec = RunRecord(problem.name, method, ordering, alpha, seed, dec.stop_iteration,
                            ks, k_pls, trace.msd_pls[ks - 1], msd_pls_opt, reason=dec.reason)
        rec.wall_time_ms = round(1000 * elapsed, 3) if record_timing else 0.0
        records.append(rec)
    return records, trace


def _record_key(rec):
    return (rec.problem, rec.method, rec.ordering, rec.alpha, rec.seed)


def run_experiment(config):
    """Cross product of problems, noise levels and replicates.

    Failures of individual runs are reported as records with method
    ``error:<method>`` and NaN scores rather than aborting the sweep.
    Records come back sorted by (problem, method, ordering, alpha, seed).
    """
    records = []
    for name in config.problems:
        problem = _problem_from_config(name, config)
        for alpha in config.alphas:
            for rep in range(config.seeds):
                seed = run_seed(config.master_seed, name, alpha, rep)
                try:
                    recs, _ = run_single(problem, alpha, seed, config.methods, config.k_max,
                                         config.delta, config.p, config.epsilon,
                                         config.h or None, config.tau, config.record_timing)
                except Exception as exc:  # recorded, not fatal
                    recs = [RunRecord(name, f"error:{type(exc).__name__}", "none", alpha, seed,
                                      0, 0, 0, math.nan, math.nan, reason=str(exc))]
                records.extend(recs)
    records.sort(key=_record_key)
    return records


def records_to_csv(records, path=None):
    """Results CSV text (also written to ``path`` when given)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for rec in records:
        w.writerow(rec.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def summary_to_csv(records, path=None):
    """Per-cell quartiles of ``msd_selected`` (min, q1, median, q3, max)."""
    cells = {}
    for rec in records:
        cells.setdefault((rec.problem, rec.method, rec.ordering, rec.alpha), []).append(
            rec.msd_selected)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["problem", "method", "ordering", "alpha", "n", "min", "q1", "median", "q3",
                "max"])
    for key in sorted(cells):
        v = np.asarray(cells[key], dtype=float)
        q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
        w.writerow([key[0], key[1], key[2], repr(float(key[3])), str(v.size)]
                   + [repr(float(x)) for x in q])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
