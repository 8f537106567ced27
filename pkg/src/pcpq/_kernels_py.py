"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

Same contracts and the same float32 accumulation order for the scans, so the
two backends return bit-identical scores.
"""

import numpy as np


def adc_scan(lut: np.ndarray, codes: np.ndarray) -> np.ndarray:
    n, m = codes.shape
    if m == 0:
        return np.zeros(n, dtype=np.float32)
    acc = lut[0][codes[:, 0]].astype(np.float32, copy=True)
    for j in range(1, m):
        acc += lut[j][codes[:, j]]
    return acc


def adc_scan_scaled(eta: np.ndarray, codes: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    n, m = codes.shape
    if m == 0:
        return np.zeros(n, dtype=np.float32)
    acc = eta[0][codes[:, 0]] * alphas[:, 0]
    for j in range(1, m):
        acc += eta[j][codes[:, j]] * alphas[:, j]
    return acc.astype(np.float32, copy=False)


def power_iteration(gram: np.ndarray, start: np.ndarray, max_iters: int, tol: float):
    v = np.array(start, dtype=np.float64)
    w = gram @ v
    lam = float(v @ w)
    for _ in range(max_iters):
        nrm = float(np.sqrt(w @ w))
        if nrm == 0.0:
            break
        v = w / nrm
        w = gram @ v
        lam_new = float(v @ w)
        lam = lam_new
        if float(np.linalg.norm(w - lam_new * v)) <= tol * abs(lam_new):
            break
    return lam, v


def _simpson_weights(panels: int) -> np.ndarray:
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w


def sin_power_simpson(theta: np.ndarray, powers: np.ndarray, panels: int) -> np.ndarray:
    w = _simpson_weights(panels)
    grid = np.arange(panels + 1, dtype=np.float64)
    out = np.zeros((powers.size, theta.size))
    chunk = 64
    for start in range(0, theta.size, chunk):
        h = theta[start:start + chunk] / panels
        sines = np.sin(grid[None, :] * h[:, None])
        cur = np.ones_like(sines)
        have = 0
        for r, e in enumerate(powers):
            for _ in range(int(e) - have):
                cur = cur * sines
            have = int(e)
            out[r, start:start + chunk] = (cur @ w) * h / 3.0
    return out


def assign_quadratic(w: np.ndarray, a: np.ndarray, b: np.ndarray, lam: np.ndarray):
    best = (w[None, :] * lam[:, :1] + a[None, :]) * lam[:, :1] + b[None, :]
    labels = np.zeros(best.shape, dtype=np.int64)
    for slot in range(1, lam.shape[1]):
        x = lam[:, slot:slot + 1]
        v = (w[None, :] * x + a[None, :]) * x + b[None, :]
        better = v < best
        best = np.where(better, v, best)
        labels[better] = slot
    return labels, best
