"""Clustering solvers for one section of coordinates.

Four solvers share one alternating loop:

* ``kmeans_pp``                      Lloyd's k-means with k-means++ seeding.
* ``anisotropic_k_clustering``       score-aware loss, scalars fixed at 1.
* ``projective_k_clustering``        each center is a line through the origin.
* ``aniso_projective_k_clustering``  score-aware loss with a free scalar per point.

Every solver records the loss after each assignment step in ``loss_trace``;
the center steps never increase the loss for a fixed assignment, so the trace
is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ClusterModel, make_rng
from .numerics import (DegenerateClusterError, sin_power_integrals, solve_spd,
                       solve_spd_batched, top_eigvec_gram)

_EPS_DENOM = 1e-30


@dataclass
class ResidualPair:
    r_par: np.ndarray
    r_bot: np.ndarray


@dataclass
class AnisoWeights:
    h_par: np.ndarray | float
    h_bot: np.ndarray | float


def residual_components(x, c) -> ResidualPair:
    """Split x - c into the part along x and the part orthogonal to x."""
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    nx2 = float(x @ x)
    if nx2 <= 0:
        raise ValueError("residual components are undefined for x = 0")
    coef = float(x @ c) / nx2
    return ResidualPair(r_par=x - coef * x, r_bot=coef * x - c)


def _theta_max(norms: np.ndarray, t: float, limit: str) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(norms > 0, t / np.where(norms > 0, norms, 1.0), np.inf)
    if limit == "arccos":
        # queries q (unit) with <q, x> >= t lie within arccos(t/|x|) of x
        return np.arccos(np.clip(ratio, 0.0, 1.0))
    if limit == "ratio":
        return np.clip(ratio, 0.0, np.pi / 2)
    raise ValueError(f"unknown integration limit {limit!r}")


def aniso_weights_array(norms, t: float, dbar: int, limit: str = "arccos") -> AnisoWeights:
    """Vectorized h_par / h_bot. Zero-norm points get zero weights."""
    if dbar < 2:
        raise ValueError("anisotropic weights need dbar >= 2")
    norms = np.asarray(norms, dtype=np.float64)
    theta = _theta_max(norms, float(t), limit)
    theta = np.where(norms > 0, theta, 0.0)
    low, high = sin_power_integrals([dbar - 2, dbar], theta)
    return AnisoWeights(h_par=(dbar - 1) * (low - high), h_bot=high)


def aniso_weights(norm_x: float, t: float, dbar: int, limit: str = "arccos") -> AnisoWeights:
    """Weights of the parallel and orthogonal residual for a point of norm ``norm_x``.

    ``limit="arccos"`` integrates up to arccos(t / norm_x), the half-angle of the
    cone of unit queries scoring at least t; ``limit="ratio"`` integrates up to
    t / norm_x clamped to [0, pi/2].
    """
    if not norm_x > 0:
        raise ValueError("anisotropic weights need norm_x > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    w = aniso_weights_array(np.array([norm_x]), t, dbar, limit)
    return AnisoWeights(h_par=float(w.h_par[0]), h_bot=float(w.h_bot[0]))


def _quad_coeffs(nx2, g, nc2, h_par, h_bot):
    """Per-point loss as w*alpha^2 + a*alpha + b for center c scaled by alpha."""
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (h_par - h_bot) * g * g / np.where(nx2 > 0, nx2, 1.0) + h_bot * nc2
    return w, -2.0 * h_par * g, h_par * nx2


def opt_alpha_aniso(x, c, weights: AnisoWeights) -> float:
    """Scalar alpha minimizing the anisotropic loss of x against alpha * c."""
    x = np.asarray(x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    nx2 = float(x @ x)
    if nx2 <= 0:
        raise ValueError("x must be nonzero")
    g = float(x @ c)
    w, a, _ = _quad_coeffs(nx2, g, float(c @ c), weights.h_par, weights.h_bot)
    if w <= _EPS_DENOM:
        return 0.0
    return float(-a / (2.0 * w))


def aniso_point_loss(x, c, weights: AnisoWeights) -> float:
    """h_par*|r_par(x, c)|^2 + h_bot*|r_bot(x, c)|^2, straight from the definitions."""
    r = residual_components(x, c)
    return float(weights.h_par * (r.r_par @ r.r_par) + weights.h_bot * (r.r_bot @ r.r_bot))


# ---------------------------------------------------------------- assignment


def _projective_table(X, centers):
    nc2 = np.einsum("ij,ij->i", centers, centers)
    if np.any(nc2 <= 0):
        raise ValueError("projective centers must be nonzero")
    g = X @ centers.T
    nx2 = np.einsum("ij,ij->i", X, X)
    loss = np.maximum(nx2[:, None] - g * g / nc2[None, :], 0.0)
    return g, nc2, loss


def _assign_projective(X, centers):
    g, nc2, loss = _projective_table(X, centers)
    j = np.argmin(loss, axis=1)
    rows = np.arange(X.shape[0])
    alphas = g[rows, j] / nc2[j]
    return j, alphas, loss[rows, j]


def assign_projective(X, centers):
    """Map each point to the line minimizing its projection error.

    Returns (assignment, alphas, total loss); ties go to the lowest index and
    zero points get center 0 with alpha 0.
    """
    X = np.asarray(X, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    j, alphas, per_point = _assign_projective(X, centers)
    return j, alphas, float(per_point.sum())


def _sqdist(X, centers):
    nx2 = np.einsum("ij,ij->i", X, X)
    nc2 = np.einsum("ij,ij->i", centers, centers)
    return np.maximum(nx2[:, None] - 2.0 * (X @ centers.T) + nc2[None, :], 0.0)


def _assign_kmeans(X, centers):
    dist = _sqdist(X, centers)
    j = np.argmin(dist, axis=1)
    return j, np.ones(X.shape[0]), dist[np.arange(X.shape[0]), j]


def _assign_anisotropic(X, centers, h_par, h_bot, allow_scaling, select="loss"):
    n = X.shape[0]
    rows = np.arange(n)
    nx2 = np.einsum("ij,ij->i", X, X)
    nc2 = np.einsum("ij,ij->i", centers, centers)
    g = X @ centers.T
    hp = h_par[:, None]
    hb = h_bot[:, None]
    w, a, b = _quad_coeffs(nx2[:, None], g, nc2[None, :], hp, hb)
    active = (nx2 > 0) & (h_par > 0)

    if allow_scaling:
        safe = w > _EPS_DENOM
        beta = np.where(safe, -a / (2.0 * np.where(safe, w, 1.0)), 0.0)
        loss = np.maximum(w * beta * beta + a * beta + b, 0.0)
        if select == "loss":
            j = np.argmin(loss, axis=1)
        elif select == "euclidean":
            dist = nx2[:, None] - 2.0 * beta * g + beta * beta * nc2[None, :]
            j = np.argmin(dist, axis=1)
        else:
            raise ValueError(f"unknown selection rule {select!r}")
        alphas = beta[rows, j]
        per_point = loss[rows, j]
        idle = ~active
        if np.any(idle):
            # zero-weight points: plain projection, no loss contribution
            pj, palpha, _ = _assign_projective(X[idle], centers)
            j[idle] = pj
            alphas[idle] = palpha
            per_point[idle] = 0.0
        zero = nx2 <= 0
        j[zero] = 0
        alphas[zero] = 0.0
    else:
        loss = np.maximum(w + a + b, 0.0)
        j = np.argmin(loss, axis=1)
        alphas = np.ones(n)
        per_point = loss[rows, j]
        idle = ~active
        if np.any(idle):
            kj, _, _ = _assign_kmeans(X[idle], centers)
            j[idle] = kj
            per_point[idle] = 0.0
    return j, alphas, per_point


def assign_anisotropic(X, centers, weights: AnisoWeights, allow_scaling: bool,
                       select: str = "loss"):
    """Assign points under the anisotropic loss.

    With ``allow_scaling`` each (point, center) pair gets its optimal scalar
    and the pair with the lowest loss wins (``select="euclidean"`` instead picks
    the center minimizing |x - beta*c|). Without scaling alpha is 1. Points
    with zero weight (or zero norm) fall back to the isotropic choice and add
    no loss. Returns (assignment, alphas, total loss).
    """
    X = np.asarray(X, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    n = X.shape[0]
    h_par = np.broadcast_to(np.asarray(weights.h_par, dtype=np.float64), (n,))
    h_bot = np.broadcast_to(np.asarray(weights.h_bot, dtype=np.float64), (n,))
    j, alphas, per_point = _assign_anisotropic(X, centers, h_par, h_bot,
                                               allow_scaling, select)
    return j, alphas, float(per_point.sum())


# ------------------------------------------------------------- center steps


def center_projective(Xj, seed: int = 0) -> np.ndarray:
    """Unit direction minimizing the projection error of the cluster (top right singular vector)."""
    Xj = np.asarray(Xj, dtype=np.float64)
    if Xj.shape[0] == 0:
        raise ValueError("empty cluster")
    _, v = top_eigvec_gram(Xj.T @ Xj, seed=seed)
    return v


def _aniso_normal_equations(X, alphas, h_par, h_bot):
    nx2 = np.einsum("ij,ij->i", X, X)
    ok = nx2 > 0
    a2 = alphas * alphas
    coef_outer = np.where(ok, a2 * (h_par - h_bot) / np.where(ok, nx2, 1.0), 0.0)
    coef_eye = np.where(ok, a2 * h_bot, 0.0)
    coef_rhs = np.where(ok, alphas * h_par, 0.0)
    return coef_outer, coef_eye, coef_rhs


def center_anisotropic(Xj, alphas, weights: AnisoWeights) -> np.ndarray:
    """Closed-form center for a cluster with fixed per-point scalars.

    Solves (sum a_i^2 (h_par_i - h_bot_i)/|x_i|^2 x_i x_i^T + I sum a_i^2 h_bot_i) c
    = sum a_i h_par_i x_i. Raises DegenerateClusterError if the matrix is singular.
    """
    Xj = np.asarray(Xj, dtype=np.float64)
    if Xj.shape[0] == 0:
        raise ValueError("empty cluster")
    n, dim = Xj.shape
    alphas = np.broadcast_to(np.asarray(alphas, dtype=np.float64), (n,))
    h_par = np.broadcast_to(np.asarray(weights.h_par, dtype=np.float64), (n,))
    h_bot = np.broadcast_to(np.asarray(weights.h_bot, dtype=np.float64), (n,))
    co, ce, cr = _aniso_normal_equations(Xj, alphas, h_par, h_bot)
    M = (Xj * co[:, None]).T @ Xj + ce.sum() * np.eye(dim)
    rhs = cr @ Xj
    return solve_spd(M, rhs)


def _aniso_centers_batched(X, labels, k, alphas, h_par, h_bot):
    n, dim = X.shape
    co, ce, cr = _aniso_normal_equations(X, alphas, h_par, h_bot)
    outer = (X[:, :, None] * X[:, None, :]).reshape(n, dim * dim)
    onehot = np.zeros((k, n))
    onehot[labels, np.arange(n)] = 1.0
    M = (onehot @ (outer * co[:, None])).reshape(k, dim, dim)
    M += (onehot @ ce)[:, None, None] * np.eye(dim)
    rhs = onehot @ (X * cr[:, None])
    return solve_spd_batched(M, rhs)


def _cluster_aniso_loss(X, labels, k, centers, alphas, h_par, h_bot):
    nx2 = np.einsum("ij,ij->i", X, X)
    c = centers[labels]
    g = np.einsum("ij,ij->i", X, c)
    w, a, b = _quad_coeffs(nx2, g, np.einsum("ij,ij->i", c, c), h_par, h_bot)
    per_point = np.where(nx2 > 0, np.maximum(w * alphas**2 + a * alphas + b, 0.0), 0.0)
    return np.bincount(labels, weights=per_point, minlength=k)


# ----------------------------------------------------------- initialization


def kmeanspp_seeds(X, k: int, rng: np.random.Generator, nonzero: bool = False) -> np.ndarray:
    """k-means++ D^2 seeding; with ``nonzero`` only nonzero rows are eligible.

    If fewer than k eligible rows exist, remaining seeds are canonical basis
    vectors.
    """
    X = np.asarray(X, dtype=np.float64)
    n, dim = X.shape
    pool = np.flatnonzero(np.any(X != 0, axis=1)) if nonzero else np.arange(n)
    seeds = []
    if pool.size:
        P = X[pool]
        first = int(rng.integers(pool.size))
        seeds.append(P[first])
        d2 = np.sum((P - P[first]) ** 2, axis=1)
        taken = np.zeros(pool.size, dtype=bool)
        taken[first] = True
        while len(seeds) < min(k, pool.size):
            total = d2.sum()
            if total > 0:
                pick = int(rng.choice(pool.size, p=d2 / total))
            else:
                pick = int(rng.choice(np.flatnonzero(~taken)))
            taken[pick] = True
            seeds.append(P[pick])
            d2 = np.minimum(d2, np.sum((P - P[pick]) ** 2, axis=1))
    basis = 0
    while len(seeds) < k:
        e = np.zeros(dim)
        e[basis % dim] = 1.0
        seeds.append(e)
        basis += 1
    return np.array(seeds)


def init_normalized_sampling(X, k: int, seed: int = 0) -> np.ndarray:
    """Seed k unit directions; each new one is sampled with probability
    proportional to min over chosen s of min(|x - s|^2, |x + s|^2) over the
    unit-normalized points. Zero points are never sampled."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    keep = np.flatnonzero(norms > 0)
    if keep.size < k:
        raise ValueError(f"need at least {k} nonzero points, have {keep.size}")
    U = X[keep] / norms[keep, None]
    rng = make_rng(seed, 0x11)
    available = np.ones(U.shape[0], dtype=bool)
    first = int(rng.integers(U.shape[0]))
    chosen = [first]
    available[first] = False
    weight = np.minimum(np.sum((U - U[first]) ** 2, axis=1),
                        np.sum((U + U[first]) ** 2, axis=1))
    while len(chosen) < k:
        p = np.where(available, weight, 0.0)
        total = p.sum()
        if total > 0:
            pick = int(rng.choice(U.shape[0], p=p / total))
        else:
            pick = int(rng.choice(np.flatnonzero(available)))
        chosen.append(pick)
        available[pick] = False
        weight = np.minimum(weight, np.minimum(np.sum((U - U[pick]) ** 2, axis=1),
                                               np.sum((U + U[pick]) ** 2, axis=1)))
    return U[chosen]


def _initial_centers(X, k, init, seed, nonzero):
    if isinstance(init, np.ndarray) or isinstance(init, (list, tuple)):
        centers = np.array(init, dtype=np.float64)
        if centers.shape != (k, X.shape[1]):
            raise ValueError(f"init centers must have shape {(k, X.shape[1])}")
        return centers
    if init == "kmeans++":
        return kmeanspp_seeds(X, k, make_rng(seed, 0xC0), nonzero=nonzero)
    if init == "normalized":
        return init_normalized_sampling(X, k, seed)
    raise ValueError(f"unknown init {init!r}")


# ------------------------------------------------------------ shared loop


def _reseed_empty(X, centers, labels, per_point, k):
    """Move centers of empty clusters onto the points with the largest loss."""
    counts = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return centers
    order = np.argsort(-per_point, kind="stable")
    centers = centers.copy()
    for slot, idx in zip(empty, order):
        if per_point[idx] <= 0:
            break
        centers[slot] = X[idx]
    return centers


def _run(X, centers, assign: Callable, update: Callable, max_iters: int, tol: float,
         k: int) -> ClusterModel:
    labels, alphas, per_point = assign(centers)
    trace = [float(per_point.sum())]
    for _ in range(max_iters):
        centers = update(centers, labels, alphas, per_point)
        centers = _reseed_empty(X, centers, labels, per_point, k)
        labels, alphas, per_point = assign(centers)
        loss = float(per_point.sum())
        prev = trace[-1]
        trace.append(loss)
        if prev <= 0 or (prev - loss) <= tol * prev:
            break
    return ClusterModel(centers=centers, assignment=labels, alphas=alphas, loss_trace=trace)


def _check_k(X, k):
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("expected a non-empty 2-D point array")
    if not 1 <= k <= X.shape[0]:
        raise ValueError(f"k={k} must be between 1 and n={X.shape[0]}")


# ------------------------------------------------------------------ solvers


def kmeans_pp(X, k: int, max_iters: int = 20, tol: float = 1e-6, seed: int = 0,
              init="kmeans++") -> ClusterModel:
    """Lloyd's algorithm from k-means++ seeds; alphas are all 1."""
    X = np.asarray(X, dtype=np.float64)
    _check_k(X, k)
    centers = _initial_centers(X, k, init, seed, nonzero=False)

    def update(centers, labels, alphas, per_point):
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, X)
        new = centers.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        return new

    return _run(X, centers, lambda c: _assign_kmeans(X, c), update, max_iters, tol, k)


def projective_k_clustering(X, k: int, init="kmeans++", max_iters: int = 20,
                            tol: float = 1e-6, seed: int = 0) -> ClusterModel:
    """Alternate projection-error assignment and top-singular-vector centers."""
    X = np.asarray(X, dtype=np.float64)
    _check_k(X, k)
    centers = _initial_centers(X, k, init, seed, nonzero=True)
    if np.any(np.einsum("ij,ij->i", centers, centers) <= 0):
        raise ValueError("initial centers must be nonzero")

    def update(centers, labels, alphas, per_point):
        new = centers.copy()
        for j in range(k):
            members = X[labels == j]
            if members.shape[0] and np.any(members):
                new[j] = center_projective(members)
        return new

    return _run(X, centers, lambda c: _assign_projective(X, c), update, max_iters, tol, k)


def _resolve_weights(X, t, weights, limit):
    n, dim = X.shape
    if weights is not None:
        return (np.broadcast_to(np.asarray(weights.h_par, dtype=np.float64), (n,)).copy(),
                np.broadcast_to(np.asarray(weights.h_bot, dtype=np.float64), (n,)).copy())
    if t is None:
        raise ValueError("either t or weights is required")
    w = aniso_weights_array(np.linalg.norm(X, axis=1), t, dim, limit)
    return w.h_par, w.h_bot


def _aniso_solver(X, k, t, weights, limit, allow_scaling, select, init, max_iters,
                  tol, seed) -> ClusterModel:
    X = np.asarray(X, dtype=np.float64)
    _check_k(X, k)
    h_par, h_bot = _resolve_weights(X, t, weights, limit)
    centers = _initial_centers(X, k, init, seed, nonzero=True)
    assign = lambda c: _assign_anisotropic(X, c, h_par, h_bot, allow_scaling, select)  # noqa: E731

    if not np.any(h_par > 0):
        labels, alphas, per_point = assign(centers)
        return ClusterModel(centers=centers, assignment=labels, alphas=alphas,
                            loss_trace=[float(per_point.sum())], degenerate=True)

    def update(centers, labels, alphas, per_point):
        cand, ok = _aniso_centers_batched(X, labels, k, alphas, h_par, h_bot)
        # a zero candidate cannot be scaled back to anything useful
        ok &= np.einsum("ij,ij->i", np.nan_to_num(cand), np.nan_to_num(cand)) > 0
        cand = np.where(ok[:, None], cand, centers)
        old = _cluster_aniso_loss(X, labels, k, centers, alphas, h_par, h_bot)
        new = _cluster_aniso_loss(X, labels, k, cand, alphas, h_par, h_bot)
        # the closed form is exact for fixed alphas, but guard against round-off
        # and singular systems: keep whichever center is better
        better = new <= old
        return np.where(better[:, None], cand, centers)

    return _run(X, centers, assign, update, max_iters, tol, k)


def aniso_projective_k_clustering(X, k: int, t: float | None = None, max_iters: int = 20,
                                  tol: float = 1e-6, seed: int = 0, init="kmeans++",
                                  weights: AnisoWeights | None = None,
                                  limit: str = "arccos",
                                  select: str = "loss") -> ClusterModel:
    """Anisotropic loss with a free scalar per point.

    Each round: closed-form centers with the scalars held fixed, then every
    point re-picks its (center, optimal scalar) pair. ``weights`` overrides the
    per-point weights derived from ``t``. If every weight is zero the loss is
    identically zero; the initial centers are returned with ``degenerate`` set.
    """
    return _aniso_solver(X, k, t, weights, limit, True, select, init, max_iters, tol, seed)


def anisotropic_k_clustering(X, k: int, t: float | None = None, max_iters: int = 20,
                             tol: float = 1e-6, seed: int = 0, init="kmeans++",
                             weights: AnisoWeights | None = None,
                             limit: str = "arccos") -> ClusterModel:
    """Anisotropic (score-aware) k-clustering with all scalars fixed to 1."""
    return _aniso_solver(X, k, t, weights, limit, False, "loss", init, max_iters, tol, seed)


def point_weights(X, t: float, limit: str = "arccos") -> AnisoWeights:
    """Per-row weights for the rows of X (section dimension taken from X)."""
    X = np.asarray(X, dtype=np.float64)
    return aniso_weights_array(np.linalg.norm(X, axis=1), t, X.shape[1], limit)
