"""Iterative regularization of ill-posed linear systems with spectral stopping rules.

The main entry points are :func:`filter_data_2d` (Picard-parameter filtering
of data in the DFT basis), :func:`solve` (projected least squares under a
stopping rule) and :func:`hybrid_run` (projected Tikhonov with W-GCV).
"""

from .gkb import BidiagFactorization, GivensQR, PlsIterate, gkb_run, iterate_pls, pls_solve
from .hybrid import (HybridResult, LambdaChoice, direct_tikhonov, df_lambda_select,
                     gcv_select, hybrid_run, tikhonov_projected, wgcv_function, wgcv_select)
from .operators import (Blur2D, DenseOperator, IdentityOperator, KroneckerOperator,
                        LinearOperator, SvdTriple, apply, apply_adjoint, dense_matrix, dft2,
                        idft2, kron_svd, unvec, vec)
from .pps import PpsPair, pps_decompose, smooth_component
from .spectral_filter import (FilterResult, OrderingPermutation, PicardEstimate,
                              elliptic_order, filter_data_2d, filter_data_svd, filter_mask,
                              hyperbolic_order, ordering, picard_parameter, variance_sequence)
from .stopping import (DataFilteringRule, DiscrepancyRule, LCurveRule, NcpRule,
                       StoppingDecision, lcurve_corner, ncp_distance, solve)

__version__ = "0.1.0"
