"""Kernel backend selection.

The compiled extension is preferred when it imports cleanly; setting the
environment variable ``Z2SPINOR_PURE_PYTHON=1`` forces the numpy fallback
(useful for benchmarking and debugging).
"""

import os

from . import _kernels_py

if os.environ.get("Z2SPINOR_PURE_PYTHON") == "1":
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _ext

        kernels = _ext
        BACKEND = "compiled"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

convolve = kernels.convolve
bessel_i_grid = kernels.bessel_i_grid
assemble_t_matrix = kernels.assemble_t_matrix
eval_series = kernels.eval_series
