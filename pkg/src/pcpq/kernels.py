"""Kernel backend selection.

The Cython extension is used when it was built; otherwise (or when the
environment variable ``PCPQ_PURE_PYTHON`` is set to a non-empty value other
than ``0``) the numpy fallback is used. ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py

_force_py = os.environ.get("PCPQ_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

adc_scan = _impl.adc_scan
adc_scan_scaled = _impl.adc_scan_scaled
power_iteration = _impl.power_iteration
sin_power_simpson = _impl.sin_power_simpson
assign_quadratic = _impl.assign_quadratic


def backends() -> dict:
    """All importable backends by name, for parity tests and benchmarks."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]
        found["cython"] = _kernels
    except ImportError:
        pass
    return found
