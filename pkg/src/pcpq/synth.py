"""Synthetic datasets for smoke tests and the reproduction fixture."""

from __future__ import annotations

import numpy as np

from .core import ConfigError, make_rng

DISTRIBUTIONS = ("gaussian", "unit-sphere", "clustered")

# clustered fixture: unit-normalized points around a few Gaussian directions
N_CLUSTERS = 64
NOISE = 0.4


def generate(n: int, d: int, dist: str = "gaussian", seed: int = 0) -> np.ndarray:
    """n x d float32 points.

    ``clustered`` mimics a normalized embedding set: points scatter around
    ``N_CLUSTERS`` random directions and are then scaled to unit norm. The
    cluster directions depend on ``d`` and ``seed`` only through a fixed
    stream, so bases and queries drawn with different seeds share them.
    """
    if n < 1 or d < 1:
        raise ConfigError(f"n and d must be positive, got n={n} d={d}")
    if dist not in DISTRIBUTIONS:
        raise ConfigError(f"unknown distribution {dist!r}; choose from {', '.join(DISTRIBUTIONS)}")
    rng = make_rng(seed, 0x6E)
    if dist == "gaussian":
        return rng.standard_normal((n, d)).astype(np.float32)
    if dist == "unit-sphere":
        X = rng.standard_normal((n, d))
        norms = np.linalg.norm(X, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return (X / norms).astype(np.float32)
    centers = make_rng(0, 0xC1, d).standard_normal((N_CLUSTERS, d))
    X = centers[rng.integers(N_CLUSTERS, size=n)] + NOISE * rng.standard_normal((n, d))
    return (X / np.linalg.norm(X, axis=1, keepdims=True)).astype(np.float32)
