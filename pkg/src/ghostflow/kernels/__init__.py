"""Hot numerical kernels with selectable backend.

``GHOSTFLOW_KERNELS`` picks the implementation: ``numba`` (default when
importable), ``numpy`` (pure fallback), or ``auto``. Both backends expose the
same functions and produce bitwise-identical results; numba loops use prange
only for element-wise work (no reductions), so results do not depend on the
thread count.
"""

import os

_choice = os.environ.get("GHOSTFLOW_KERNELS", "auto").lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"GHOSTFLOW_KERNELS must be auto|numba|numpy, got {_choice!r}")

if _choice in ("auto", "numba"):
    try:
        from . import numba_impl as _impl
        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        from . import numpy_impl as _impl
        BACKEND = "numpy"
else:
    from . import numpy_impl as _impl
    BACKEND = "numpy"

muscl_faces = _impl.muscl_faces
knp_flux_batch = _impl.knp_flux_batch
gather_weighted = _impl.gather_weighted


def set_workers(n):
    """Set thread count for element-wise kernels. No-op on the numpy backend."""
    if n < 1:
        raise ValueError("worker count must be >= 1")
    if BACKEND == "numba":
        import numba
        numba.set_num_threads(n)
