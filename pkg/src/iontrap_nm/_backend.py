"""Select the RK4 core: compiled extension if importable, numpy otherwise.

Set ``IONTRAP_NM_BACKEND=python`` to force the numpy fallback.
"""

import os

from . import _kernels_py

python_rk4_advance = _kernels_py.rk4_advance

try:
    from ._rk4 import rk4_advance as compiled_rk4_advance
except ImportError:  # extension not built
    compiled_rk4_advance = None

if compiled_rk4_advance is not None and os.environ.get("IONTRAP_NM_BACKEND", "").lower() != "python":
    BACKEND = "cython"
    rk4_advance = compiled_rk4_advance
else:
    BACKEND = "python"
    rk4_advance = python_rk4_advance


def get_rk4(backend=None):
    """Return the propagation function for ``backend`` (``None`` means the import-time choice)."""
    if backend is None:
        return rk4_advance
    if backend == "python":
        return python_rk4_advance
    if backend == "cython":
        if compiled_rk4_advance is None:
            raise RuntimeError("compiled backend requested but the extension is not built")
        return compiled_rk4_advance
    raise ValueError(f"unknown backend {backend!r}")
