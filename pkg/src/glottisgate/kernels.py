"""Hot-loop kernels with a compiled backend and a numpy fallback.

The Cython extension ``_ckernels`` is used when it was built; otherwise, or
when ``GLOTTISGATE_PURE_PYTHON`` is set to a non-empty value, the functions
come from ``_pykernels``. Both expose identical signatures and results.
"""

import os

from . import _pykernels

if os.environ.get("GLOTTISGATE_PURE_PYTHON"):
    from . import _pykernels as _impl
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _pykernels as _impl
        BACKEND = "python"

# numpy's count_nonzero beats the compiled loop here (see benchmarks/), so
# both backends use it
confusion_counts = _pykernels.confusion_counts
box_histogram = _impl.box_histogram
otsu_level = _impl.otsu_level
gate_statuses = _impl.gate_statuses
subset_sum_counts = _impl.subset_sum_counts

STATUS_ZEROED, STATUS_HELD, STATUS_DETECTED = 0, 1, 2

__all__ = [
    "BACKEND",
    "box_histogram",
    "confusion_counts",
    "gate_statuses",
    "otsu_level",
    "subset_sum_counts",
]
