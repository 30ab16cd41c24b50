"""Backend selection for the hot simulation loop.

The compiled extension is used when it imports; set ``SEPGLM_PURE_PYTHON=1``
to force the reference implementation.
"""

import os

from . import _pykernels

BACKEND = "python"
simulate_counts = _pykernels.simulate_counts

if os.environ.get("SEPGLM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels
    except ImportError:  # extension not built
        pass
    else:
        simulate_counts = _kernels.simulate_counts
        BACKEND = "cython"

__all__ = ["BACKEND", "simulate_counts"]
