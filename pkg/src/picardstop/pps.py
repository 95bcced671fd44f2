"""Periodic-plus-smooth decomposition ``B = P + S``.

``S`` is the smooth image that absorbs the jumps across opposite borders,
``P = B - S`` is (nearly) periodic and therefore free of the spurious
high-frequency DFT coefficients a non-periodic image produces.
"""

from collections import namedtuple

import numpy as np

from .operators import dft2, idft2

__all__ = ["PpsPair", "boundary_gap", "smooth_component", "pps_decompose"]

PpsPair = namedtuple("PpsPair", ["P", "S"])


def _as_image(B):
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if B.ndim != 2:
        raise ValueError(f"expected an image, got shape {B.shape}")
    return B


def boundary_gap(B):
    """Jumps across opposite borders, ``V = V1 + V2``.

    ``V1`` lives on the first and last rows, ``V1[j] = B[M-1-j] - B[j]``;
    ``V2`` likewise on the first and last columns. An axis of length 1 has
    no border and contributes nothing.
    """
    B = _as_image(B)
    M, N = B.shape
    V = np.zeros_like(B)
    if M > 1:
        V[0, :] += B[M - 1, :] - B[0, :]
        V[M - 1, :] += B[0, :] - B[M - 1, :]
    if N > 1:
        V[:, 0] += B[:, N - 1] - B[:, 0]
        V[:, N - 1] += B[:, 0] - B[:, N - 1]
    return V


def _laplacian_symbol(M, N):
    """Eigenvalues ``2cos(2pi j/M) + 2cos(2pi k/N) - 4`` of the periodic Laplacian."""
    sym = np.zeros((M, N))
    if M > 1:
        sym += (2 * np.cos(2 * np.pi * np.arange(M) / M) - 2)[:, None]
    if N > 1:
        sym += (2 * np.cos(2 * np.pi * np.arange(N) / N) - 2)[None, :]
    return sym


def smooth_component(B, return_residue=False):
    """Smooth component ``S`` of the periodic-plus-smooth decomposition.

    The DFT of ``S`` is the DFT of :func:`boundary_gap` divided by the
    periodic Laplacian symbol, with the dc entry set to zero.
    """
    B = _as_image(B)
    M, N = B.shape
    if M == 1 and N == 1:
        S = np.zeros_like(B)
        return (S, 0.0) if return_residue else S
    spec = dft2(boundary_gap(B))
    sym = _laplacian_symbol(M, N)
    sym[0, 0] = 1.0
    spec = spec / sym
    spec[0, 0] = 0.0
    S = idft2(spec, real=False)
    residue = float(np.linalg.norm(S.imag))
    bound = 1e-10 * max(np.linalg.norm(B), np.finfo(float).tiny)
    if residue > bound:
        raise ArithmeticError(f"smooth component has imaginary residue {residue:.3e}")
    return (S.real, residue) if return_residue else S.real


def pps_decompose(B):
    """Split ``B`` into its periodic and smooth components."""
    B = _as_image(B)
    S = smooth_component(B)
    return PpsPair(B - S, S)
