"""Picard-parameter filtering of a blurred, noisy image.

Filters the data with both coefficient orderings, prints where the noise
plateau was detected and how much of the spectrum survived, and writes the
kept-frequency windows as PGM files into a scratch directory.

    python demos/filter_masks.py [output_dir]
"""

import sys
import tempfile
from pathlib import Path

from picardstop.experiments import NoiseSpec, add_noise, gen_problem, msd
from picardstop.fileio import centered_mask_image, write_pgm
from picardstop.operators import unvec
from picardstop.spectral_filter import filter_data_2d

here = Path(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp())
here.mkdir(parents=True, exist_ok=True)
P = gen_problem("gaussian_blur", 64)
b_true = unvec(P.b_true, 64, 64)

for alpha in (1e-2, 1e-4):
    noisy = unvec(add_noise(P.b_true, NoiseSpec(alpha, 7)), 64, 64)
    print(f"noise level {alpha:g}: data error {msd(noisy.ravel(), b_true.ravel()):.2e}")
    for kind in ("hyperbolic", "elliptic"):
        res = filter_data_2d(noisy, kind)
        est = res.estimate
        err = msd(res.filtered.ravel(), b_true.ravel())
        print(f"  {kind:10s} k0={est.k0:5d}  V(k0)={est.noise_variance_estimate:.3e}  "
              f"kept {res.retained:4d}/{noisy.size}  filtered error {err:.2e}")
        out = here / f"mask_{kind}_{alpha:g}.pgm"
        write_pgm(out, centered_mask_image(res.mask), maxval=255)

print(f"masks written to {here}")
