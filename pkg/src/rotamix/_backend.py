"""Kernel backend selection.

The compiled Cython extension is used when it was built; otherwise the
numpy fallback is loaded. Set ``ROTAMIX_PURE_PYTHON=1`` to force the
fallback (useful for benchmarks and equivalence tests).
"""

import os

from rotamix import _kernels_py

if os.environ.get("ROTAMIX_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from rotamix import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _kernels_py
        BACKEND = "python"

__all__ = ["BACKEND", "kernels"]
