"""Select the compiled kernels when available, numpy otherwise.

``EASE_BACKEND=python`` forces the numpy path (used by the benchmark and by
the backend-agreement tests).
"""
import os

from . import _pykernels

GAUSSIAN = _pykernels.GAUSSIAN
EPANECHNIKOV = _pykernels.EPANECHNIKOV

try:
    if os.environ.get("EASE_BACKEND", "").lower() == "python":
        raise ImportError("numpy backend requested")
    from . import _ckernels as _impl

    NAME = "cython"
except ImportError:
    _impl = _pykernels
    NAME = "python"

nw_sums = _impl.nw_sums
nearest_index = _impl.nearest_index
colsum = _impl.colsum
