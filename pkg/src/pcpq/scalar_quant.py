"""Snap per-point scalars of one section to s shared values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import AnisoWeights, _quad_coeffs
from .numerics import ScalarCodebook, kmeans_1d, minimize_quadratic_scalars


@dataclass
class QuantizedScalars:
    codebook: ScalarCodebook
    codes: np.ndarray
    quant_loss: float

    @property
    def values(self) -> np.ndarray:
        return self.codebook.values


def quantize_projective(alphas, s: int, seed: int = 0) -> QuantizedScalars:
    """1-D k-means over the projection scalars of every point in the section."""
    cb = kmeans_1d(alphas, s, seed=seed)
    return QuantizedScalars(codebook=cb, codes=cb.assignment, quant_loss=cb.loss)


def aniso_scalar_coeffs(X, centers, assignment, weights: AnisoWeights):
    """(w, a, b) with the anisotropic loss of point i at scalar lam equal to
    w_i*lam^2 + a_i*lam + b_i for its assigned center."""
    X = np.asarray(X, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)[np.asarray(assignment)]
    nx2 = np.einsum("ij,ij->i", X, X)
    g = np.einsum("ij,ij->i", X, c)
    n = X.shape[0]
    h_par = np.broadcast_to(np.asarray(weights.h_par, dtype=np.float64), (n,))
    h_bot = np.broadcast_to(np.asarray(weights.h_bot, dtype=np.float64), (n,))
    return _quad_coeffs(nx2, g, np.einsum("ij,ij->i", c, c), h_par, h_bot)


def quantize_anisotropic(X, centers, assignment, weights: AnisoWeights, s: int,
                         seed: int = 0, alphas=None) -> QuantizedScalars:
    """Pick s scalars minimizing the summed anisotropic loss of the section.

    Points with zero weight or zero norm do not enter the objective; they take
    the code nearest to their entry in ``alphas`` (0 when not given).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    w, a, b = aniso_scalar_coeffs(X, centers, assignment, weights)
    nx2 = np.einsum("ij,ij->i", X, X)
    h_par = np.broadcast_to(np.asarray(weights.h_par, dtype=np.float64), (n,))
    active = (nx2 > 0) & (h_par > 0)
    if np.any(w[active] <= 0):
        raise ValueError("inconsistent anisotropic weights: non-positive quadratic coefficient")
    if not np.any(active):
        fallback = np.zeros(n) if alphas is None else np.asarray(alphas, dtype=np.float64)
        return quantize_projective(fallback, s, seed)

    cb = minimize_quadratic_scalars(w[active], a[active], b[active], s, seed=seed)
    codes = np.empty(n, dtype=np.int64)
    codes[active] = cb.assignment
    idle = ~active
    if np.any(idle):
        target = np.zeros(n) if alphas is None else np.asarray(alphas, dtype=np.float64)
        codes[idle] = np.argmin(np.abs(target[idle, None] - cb.values[None, :]), axis=1)
    full = ScalarCodebook(values=cb.values, assignment=codes, loss=cb.loss, trace=cb.trace)
    return QuantizedScalars(codebook=full, codes=codes, quant_loss=cb.loss)
