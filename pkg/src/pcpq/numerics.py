"""Small numeric kernels used by the clustering and scalar-quantization code."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import make_rng


class DegenerateClusterError(ArithmeticError):
    """A cluster's normal-equation matrix is not positive definite."""


@dataclass
class SingularTriple:
    sigma: float
    u: np.ndarray
    v: np.ndarray


@dataclass
class ScalarCodebook:
    """Sorted scalar codes and the per-input code index.

    ``loss`` is the objective value of the final codebook; ``trace`` holds the
    objective after every round of the best restart.
    """

    values: np.ndarray
    assignment: np.ndarray
    loss: float = 0.0
    trace: list = field(default_factory=list)


def canonical_sign(v: np.ndarray) -> np.ndarray:
    """Flip ``v`` so its largest-magnitude entry (first on ties) is non-negative."""
    idx = int(np.argmax(np.abs(v)))
    return -v if v[idx] < 0 else v


@functools.lru_cache(maxsize=64)
def _start_vector(dim: int, seed: int) -> np.ndarray:
    v = make_rng(seed, 0x5D).standard_normal(dim)
    v /= np.linalg.norm(v)
    v.setflags(write=False)
    return v


def top_eigvec_gram(gram: np.ndarray, max_iters: int = 500, tol: float = 1e-10,
                    seed: int = 0) -> tuple[float, np.ndarray]:
    """Top eigenpair of a PSD Gram matrix; eigenvector sign-canonicalized.

    An all-zero matrix gives (0, e_1).
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    dim = gram.shape[0]
    if not np.any(gram):
        v = np.zeros(dim)
        v[0] = 1.0
        return 0.0, v
    lam, v = kernels.power_iteration(gram, _start_vector(dim, seed), max_iters, tol)
    v = np.asarray(v, dtype=np.float64)
    v /= np.linalg.norm(v)
    return max(float(lam), 0.0), canonical_sign(v)


def top_singular_pair(A: np.ndarray, max_iters: int = 500, tol: float = 1e-10,
                      seed: int = 0) -> SingularTriple:
    """Largest singular value and its singular vectors, via power iteration on A^T A."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValueError(f"expected a non-empty matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    lam, v = top_eigvec_gram(A.T @ A, max_iters, tol, seed)
    Av = A @ v
    sigma = float(np.linalg.norm(Av))
    u = Av / sigma if sigma > 0 else np.zeros(A.shape[0])
    return SingularTriple(sigma=sigma, u=u, v=v)


def default_ridge(A: np.ndarray) -> np.ndarray:
    dim = A.shape[-1]
    return np.maximum(1e-9 * np.trace(A, axis1=-2, axis2=-1) / dim, 0.0)


def solve_spd(A: np.ndarray, b: np.ndarray, ridge: float | None = None) -> np.ndarray:
    """Solve (A + ridge*I) x = b by Cholesky.

    ``ridge`` defaults to 1e-9 * trace(A) / dim. Raises DegenerateClusterError
    when the shifted matrix is not positive definite.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if ridge is None:
        ridge = float(default_ridge(A))
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    M = A + ridge * np.eye(A.shape[0])
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise DegenerateClusterError("matrix is not positive definite") from exc
    if not np.all(np.isfinite(L)):
        raise DegenerateClusterError("Cholesky factor is not finite")
    y = _forward(L, b)
    return _backward(L.T, y)


def _forward(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = L.shape[0]
    y = np.empty(n)
    for i in range(n):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def _backward(U: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = U.shape[0]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x


def solve_spd_batched(A: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stacked version of :func:`solve_spd` with the default ridge.

    Returns (x, ok) where ``ok[i]`` is False for systems whose Cholesky failed;
    their rows of ``x`` are NaN.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    count, dim = A.shape[0], A.shape[-1]
    M = A + default_ridge(A)[:, None, None] * np.eye(dim)
    x = np.full((count, dim), np.nan)
    ok = np.zeros(count, dtype=bool)
    try:
        L = np.linalg.cholesky(M)
        good = np.all(np.isfinite(L.reshape(count, -1)), axis=1)
        idx = np.flatnonzero(good)
        if idx.size:
            y = np.linalg.solve(L[idx], b[idx][..., None])
            x[idx] = np.linalg.solve(np.swapaxes(L[idx], -1, -2), y)[..., 0]
            ok[idx] = True
    except np.linalg.LinAlgError:
        for i in range(count):
            try:
                x[i] = solve_spd(A[i], b[i])
                ok[i] = True
            except DegenerateClusterError:
                pass
    return x, ok


SIMPSON_PANELS = 1024


def sin_power_integrals(powers, theta_max) -> np.ndarray:
    """Integrals of sin^p over [0, theta_max] for each p and each theta_max.

    Composite Simpson on 1024 uniform panels; theta_max is clamped into
    [0, pi/2]. Returns an array of shape (len(powers),) + shape(theta_max).
    """
    powers = np.atleast_1d(np.asarray(powers, dtype=np.int64))
    if np.any(powers < 0):
        raise ValueError("powers must be non-negative")
    theta = np.clip(np.asarray(theta_max, dtype=np.float64), 0.0, np.pi / 2)
    flat = np.ascontiguousarray(theta.reshape(-1))
    order = np.argsort(powers, kind="stable")
    sorted_powers = np.ascontiguousarray(powers[order], dtype=np.int_)
    vals = kernels.sin_power_simpson(flat, sorted_powers, SIMPSON_PANELS)
    out = np.empty((powers.size, flat.size))
    out[order] = vals
    return out.reshape((powers.size,) + theta.shape)


def sin_power_integral(p: int, theta_max: float) -> float:
    """Integral of sin(x)**p for x from 0 to theta_max (clamped to [0, pi/2])."""
    return float(sin_power_integrals([p], theta_max)[0])


def kmeans_1d(values, s: int, seed: int = 0, restarts: int = 10,
              max_iter: int = 100) -> ScalarCodebook:
    """1-D k-means with k-means++ seeding and Lloyd refinement, best of ``restarts``.

    All restarts run side by side. With at most ``s`` distinct values the
    codebook is exactly those values.
    """
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("kmeans_1d needs at least one value")
    if s < 1:
        raise ValueError("s must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    distinct = np.unique(x)
    if distinct.size <= s:
        codes = np.searchsorted(distinct, x)
        return ScalarCodebook(values=distinct, assignment=codes, loss=0.0, trace=[0.0])
    rng = make_rng(seed, 0x1D)
    init = np.stack([_kmeanspp_1d(x, s, rng) for _ in range(restarts)])
    # squared distance of x to code lam: a quadratic with w=1, a=-2x, b=x^2
    return _alternate_batched(np.ones_like(x), -2.0 * x, x * x, init, x, rng, max_iter,
                              reseed="farthest")


def _kmeanspp_1d(x: np.ndarray, s: int, rng: np.random.Generator) -> np.ndarray:
    centers = np.empty(s)
    centers[0] = x[rng.integers(x.size)]
    d2 = (x - centers[0]) ** 2
    for i in range(1, s):
        total = d2.sum()
        if total <= 0:
            centers[i:] = centers[i - 1]
            break
        pick = rng.choice(x.size, p=d2 / total)
        centers[i] = x[pick]
        d2 = np.minimum(d2, (x - x[pick]) ** 2)
    return centers


def quadratic_objective(w, a, b, lam) -> float:
    vals = w[:, None] * lam[None, :] ** 2 + a[:, None] * lam[None, :] + b[:, None]
    return float(np.sum(np.min(vals, axis=1)))


def minimize_quadratic_scalars(w, a, b, s: int, seed: int = 0, restarts: int = 10,
                               max_rounds: int = 100) -> ScalarCodebook:
    """Choose s scalars minimizing sum_i min_l (w_i*lam_l^2 + a_i*lam_l + b_i).

    Alternating minimization: assign each i to its best lam_l, then set each
    lam_l to the vertex of its group's summed quadratic. Restarts draw the
    initial values from the per-point minima -a_i / (2 w_i).
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if w.size == 0:
        raise ValueError("need at least one quadratic")
    if not (w.size == a.size == b.size):
        raise ValueError("w, a, b must have the same length")
    if np.any(w <= 0):
        raise ValueError("every quadratic must be strictly convex (w > 0)")
    if s < 1:
        raise ValueError("s must be >= 1")
    vertices = -a / (2.0 * w)
    rng = make_rng(seed, 0x9A)
    k = min(s, w.size)
    init = np.stack([vertices[rng.choice(w.size, size=k, replace=False)]
                     for _ in range(restarts)])
    return _alternate_batched(w, a, b, init, vertices, rng, max_rounds, reseed="random")


def _alternate_batched(w, a, b, lam, vertices, rng, max_rounds, reseed) -> ScalarCodebook:
    """Alternating minimization for several restarts at once; returns the best.

    ``lam`` has one row of starting values per restart. Empty groups are
    re-seeded from ``vertices`` (randomly, or at the worst-served point).
    """
    R, s = lam.shape
    w, a, b = (np.ascontiguousarray(v, dtype=np.float64) for v in (w, a, b))
    lam = lam.astype(np.float64, copy=True)
    labels = np.full((R, w.size), -1, dtype=np.int64)
    live = np.ones(R, dtype=bool)
    traces = [[] for _ in range(R)]
    offs = (np.arange(R) * s)[:, None]
    for _ in range(max_rounds):
        idx = np.flatnonzero(live)
        if idx.size == 0:
            break
        L = lam[idx]
        new, best = kernels.assign_quadratic(w, a, b, np.ascontiguousarray(L))
        objs = best.sum(axis=1)
        for r, o in zip(idx, objs):
            traces[r].append(float(o))
        same = np.all(new == labels[idx], axis=1)
        labels[idx] = new
        live[idx[same]] = False
        upd = idx[~same]
        if upd.size == 0:
            break
        lab = labels[upd]
        flat = (lab + offs[:upd.size]).ravel()
        sw = np.bincount(flat, weights=np.tile(w, upd.size), minlength=upd.size * s).reshape(-1, s)
        sa = np.bincount(flat, weights=np.tile(a, upd.size), minlength=upd.size * s).reshape(-1, s)
        filled = sw > 0
        L = lam[upd]
        L[filled] = -sa[filled] / (2.0 * sw[filled])
        for row, slot in zip(*np.nonzero(~filled)):
            if reseed == "random":
                L[row, slot] = vertices[rng.integers(vertices.size)]
            else:
                err = best[np.searchsorted(idx, upd[row])]
                L[row, slot] = vertices[int(np.argmax(err))]
        lam[upd] = L
    finals = [_finalize(w, a, b, lam[r], traces[r]) for r in range(R)]
    return min(finals, key=lambda cb: cb.loss)


def _finalize(w, a, b, lam, trace) -> ScalarCodebook:
    # collapse ties and sort ascending
    values = np.unique(lam)
    vals = (w[:, None] * values[None, :] + a[:, None]) * values[None, :] + b[:, None]
    labels = np.argmin(vals, axis=1)
    loss = float(np.sum(vals[np.arange(w.size), labels]))
    trace = list(trace)
    if not trace or loss != trace[-1]:
        trace.append(loss)
    return ScalarCodebook(values=values, assignment=labels, loss=loss, trace=trace)
