"""Kernel backend selection.

Two interchangeable implementations exist for every hot kernel: a compiled
Cython extension and a numpy fallback.  benchmarks/bench_kernels.py measures
both; at model shapes the compiled scatter-add (~20x) and column max (~2x)
win, while the numpy im2col convolution beats the compiled direct loops
(BLAS does the heavy lifting).  The default "auto" mode therefore mixes:
each kernel comes from whichever side is faster, falling back to pure numpy
when the extension is absent.

Override with the DTADYN_KERNELS environment variable:
  auto    mixed best-of-both (default; pure numpy if extension missing)
  cython  everything from the extension (raises if not built)
  numpy   everything from the fallback
"""

import os

from . import numpy_backend

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_choice = os.environ.get("DTADYN_KERNELS", "auto").lower()

if _choice not in ("auto", "cython", "numpy"):
    raise ValueError(f"DTADYN_KERNELS must be auto/cython/numpy, got {_choice!r}")

if _choice == "cython":
    if _ckernels is None:
        raise ImportError(
            "DTADYN_KERNELS=cython but dtadyn.kernels._ckernels is not "
            "built; run `python setup.py build_ext --inplace`"
        )
    BACKEND = "cython"
    conv1d_dilated_forward = _ckernels.conv1d_dilated_forward
    conv1d_dilated_backward = _ckernels.conv1d_dilated_backward
    scatter_add_rows = _ckernels.scatter_add_rows
    column_max = _ckernels.column_max
elif _choice == "numpy" or _ckernels is None:
    BACKEND = "numpy"
    conv1d_dilated_forward = numpy_backend.conv1d_dilated_forward
    conv1d_dilated_backward = numpy_backend.conv1d_dilated_backward
    scatter_add_rows = numpy_backend.scatter_add_rows
    column_max = numpy_backend.column_max
else:
    BACKEND = "mixed"
    conv1d_dilated_forward = numpy_backend.conv1d_dilated_forward
    conv1d_dilated_backward = numpy_backend.conv1d_dilated_backward
    scatter_add_rows = _ckernels.scatter_add_rows
    column_max = _ckernels.column_max


def backend_name():
    """Kernel backend selected at import: "mixed", "cython", or "numpy"."""
    return BACKEND
