"""Stopping rules side by side on one noisy deblurring problem.

Runs projected least squares once per rule and reports the chosen
iteration against the best one in hindsight, then shows how the hybrid
Tikhonov iteration flattens the semi-convergence curve.

    python demos/compare_rules.py [noise_level]
"""

import sys

import numpy as np

from picardstop.experiments import NoiseSpec, add_noise, gen_problem, msd, run_seed
from picardstop.hybrid import hybrid_run
from picardstop.operators import unvec, vec
from picardstop.spectral_filter import filter_data_2d
from picardstop.stopping import (DataFilteringRule, DiscrepancyRule, LCurveRule, NcpRule,
                                 solve)

alpha = float(sys.argv[1]) if len(sys.argv) > 1 else 1e-2
P = gen_problem("gaussian_blur", 64)
seed = run_seed(20240601, "gaussian_blur", alpha, 0)
spec = NoiseSpec(alpha, seed)
b = add_noise(P.b_true, spec)
B = unvec(b, 64, 64)

rules = {
    "DF hyperbolic": DataFilteringRule(vec(filter_data_2d(B, "hyperbolic").filtered)),
    "DF elliptic": DataFilteringRule(vec(filter_data_2d(B, "elliptic").filtered)),
    "L-curve": LCurveRule(),
    "NCP": NcpRule((64, 64)),
    "discrepancy": DiscrepancyRule(spec.std(P.b_true), b.size, tau=1.01),
}

k_max = 150
full = solve(P.A, b, DiscrepancyRule(0.0, b.size), k_max=k_max)
errors = [msd(full.factorization.W[:, :k] @ y, P.x_true)
          for k, y in enumerate(full.iterates, 1)]
k_best = int(np.argmin(errors)) + 1
print(f"noise level {alpha:g}; best iteration {k_best} with error {errors[k_best - 1]:.4f}")

for name, rule in rules.items():
    r = solve(P.A, b, rule, k_max=k_max)
    d = r.decision
    e = msd(r.x, P.x_true)
    print(f"  {name:14s} selected {d.selected_iteration:3d} (stopped at {d.stop_iteration:3d}, "
          f"{d.reason}); error {e:.4f} = {e / errors[k_best - 1]:.2f} x best")

hyb = hybrid_run(P.A, b, k_max, stop_on_stagnation=False)
h_err = [msd(hyb.solution(k), P.x_true) for k in range(1, hyb.k + 1)]
print(f"error at the last iteration: plain {errors[-1]:.4f}, hybrid {h_err[-1]:.4f} "
      f"(hybrid minimum {min(h_err):.4f})")
