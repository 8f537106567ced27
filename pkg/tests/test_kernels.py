import numpy as np
import pytest

from pcpq import kernels

BACKENDS = kernels.backends()
needs_both = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled backend not built")


def test_backend_name():
    assert kernels.BACKEND in BACKENDS


@needs_both
def test_scan_parity(rng):
    lut = rng.standard_normal((7, 40)).astype(np.float32)
    codes = rng.integers(40, size=(500, 7)).astype(np.int32)
    a, b = (BACKENDS[n].adc_scan(lut, codes) for n in ("python", "cython"))
    assert a.dtype == b.dtype == np.float32 and np.array_equal(a, b)


@needs_both
def test_scaled_scan_parity(rng):
    eta = rng.standard_normal((5, 16)).astype(np.float32)
    codes = rng.integers(16, size=(300, 5)).astype(np.int32)
    alphas = rng.standard_normal((300, 5)).astype(np.float32)
    a, b = (BACKENDS[n].adc_scan_scaled(eta, codes, alphas) for n in ("python", "cython"))
    assert np.array_equal(a, b)


@needs_both
def test_power_iteration_parity(rng):
    A = rng.standard_normal((30, 6))
    start = np.ones(6) / np.sqrt(6)
    (la, va), (lb, vb) = (BACKENDS[n].power_iteration(A.T @ A, start, 500, 1e-10)
                          for n in ("python", "cython"))
    assert la == pytest.approx(lb, rel=1e-12)
    np.testing.assert_allclose(va, vb, atol=1e-10)


@needs_both
def test_sin_power_parity(rng):
    theta = rng.uniform(0, np.pi / 2, 200)
    powers = np.array([0, 2, 4, 9], dtype=np.int_)
    a, b = (BACKENDS[n].sin_power_simpson(theta, powers, 1024) for n in ("python", "cython"))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


@needs_both
def test_assign_quadratic_parity(rng):
    w, a, b = rng.uniform(0.1, 2, 400), rng.standard_normal(400), rng.standard_normal(400)
    lam = rng.standard_normal((6, 5))
    (la, ma), (lb, mb) = (BACKENDS[n].assign_quadratic(w, a, b, lam) for n in ("python", "cython"))
    assert np.array_equal(la, lb)
    np.testing.assert_allclose(ma, mb, rtol=1e-14)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_empty_sections(name):
    K = BACKENDS[name]
    assert not K.adc_scan(np.zeros((0, 4), dtype=np.float32), np.zeros((3, 0), dtype=np.int32)).any()


def test_environment_forces_numpy_backend():
    import os
    import subprocess
    import sys
    env = dict(os.environ, PCPQ_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from pcpq import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
