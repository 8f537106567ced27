"""Time each kernel under the compiled and the numpy backend.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per (kernel, backend) with the best wall time and the
speed-up of the compiled backend over numpy.
"""

import argparse
import timeit

import numpy as np

from pcpq.kernels import backends


def cases(rng):
    n, m, k, s = 100_000, 25, 16, 8
    lut = rng.standard_normal((m, k * s)).astype(np.float32)
    codes = rng.integers(k * s, size=(n, m)).astype(np.int32)
    eta = rng.standard_normal((m, k)).astype(np.float32)
    ccodes = rng.integers(k, size=(n, m)).astype(np.int32)
    alphas = rng.standard_normal((n, m)).astype(np.float32)
    A = rng.standard_normal((200, 32))
    gram = A.T @ A
    start = rng.standard_normal(32)
    start /= np.linalg.norm(start)
    theta = rng.uniform(0, np.pi / 2, 2000)
    powers = np.array([2, 4], dtype=np.int_)
    w = rng.uniform(0.5, 2.0, 1000)
    a = rng.standard_normal(1000)
    b = rng.uniform(0, 1, 1000)
    lam = rng.standard_normal((10, 8))
    return {
        "adc_scan": lambda K: K.adc_scan(lut, codes),
        "adc_scan_scaled": lambda K: K.adc_scan_scaled(eta, ccodes, alphas),
        "power_iteration": lambda K: K.power_iteration(gram, start, 500, 1e-10),
        "sin_power_simpson": lambda K: K.sin_power_simpson(theta, powers, 1024),
        "assign_quadratic": lambda K: K.assign_quadratic(w, a, b, lam),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    found = backends()
    if "cython" not in found:
        print("compiled backend not built; timing numpy only")
    rng = np.random.default_rng(0)
    for name, fn in cases(rng).items():
        times = {}
        for label, mod in found.items():
            fn(mod)  # warm-up
            times[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        line = "  ".join(f"{lab} {t * 1e3:9.3f} ms" for lab, t in times.items())
        if "cython" in times:
            line += f"  speed-up x{times['python'] / times['cython']:.1f}"
        print(f"{name:18s} {line}")


if __name__ == "__main__":
    main()
