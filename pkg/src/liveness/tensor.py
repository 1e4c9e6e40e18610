"""Dense float64 tensor helpers.

Tensors are plain C-contiguous ``numpy.float64`` arrays of rank 1 to 4. The
helpers here validate shapes up front and refuse to hand back non-finite
data, so every downstream layer can assume clean inputs.
"""

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError

DTYPE = np.float64
MAX_RANK = 4


def _check_shape(shape):
    shape = tuple(int(d) for d in shape)
    if not 1 <= len(shape) <= MAX_RANK:
        raise ShapeError(f"rank must be between 1 and {MAX_RANK}, got {len(shape)}")
    if any(d < 1 for d in shape):
        raise ShapeError(f"all dimensions must be >= 1, got {shape}")
    return shape


def check_finite(x, what="tensor"):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values in {what}")
    return x


def as_tensor(data):
    """Copy ``data`` into a validated float64 tensor."""
    arr = np.ascontiguousarray(data, dtype=DTYPE)
    _check_shape(arr.shape)
    return check_finite(arr.copy())


def alloc_filled(shape, value):
    shape = _check_shape(shape)
    if not np.isfinite(value):
        raise NumericError(f"fill value must be finite, got {value!r}")
    return np.full(shape, value, dtype=DTYPE)


def add_elementwise(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.add(a, b, dtype=DTYPE)
    return check_finite(out, "sum")


def matmul(a, b):
    """``a[m, k] @ b[k, n]`` with float64 accumulation."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    out = kernels.matmul(np.ascontiguousarray(a, DTYPE), np.ascontiguousarray(b, DTYPE))
    return check_finite(out, "matmul result")
