"""Hot numeric kernels with two interchangeable implementations.

``numba`` (default) runs explicit loops with a fixed accumulation order;
``numpy`` uses im2col and BLAS. Select with the ``LIVENESS_KERNELS``
environment variable or :func:`use_backend`. If numba cannot be imported
the numpy path is used silently.

Results agree between backends to rounding error, not bit for bit.
Determinism is guaranteed within one backend.
"""

import logging
import os
from contextlib import contextmanager

import numpy as np

from . import _numpy

log = logging.getLogger(__name__)

ENV_VAR = "LIVENESS_KERNELS"

try:
    from . import _numba
except ImportError:  # pragma: no cover - depends on the environment
    _numba = None

_BACKENDS = {"numpy": _numpy}
if _numba is not None:
    _BACKENDS["numba"] = _numba


def available_backends():
    return sorted(_BACKENDS)


def _initial_backend():
    name = os.environ.get(ENV_VAR, "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"{ENV_VAR} must be 'numba' or 'numpy', got {name!r}")
    if name not in _BACKENDS:
        log.warning("numba unavailable, falling back to numpy kernels")
        name = "numpy"
    return name


_active = _initial_backend()


def backend():
    return _active


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}")
    _active = name


@contextmanager
def use_backend(name):
    previous = _active
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


def matmul(a, b):
    return _BACKENDS[_active].matmul(a, b)


def conv3x3_same(x, k, bias):
    """'Same'-padded 3x3 cross-correlation, channels-last."""
    return _BACKENDS[_active].conv3x3_same(x, k, bias)


def conv3x3_same_grad_params(x, dout):
    """Kernel and bias gradients of :func:`conv3x3_same`."""
    return _BACKENDS[_active].conv3x3_same_grad_params(x, dout)


def conv3x3_same_grad_input(dout, k):
    # the input gradient is itself a same-conv with the kernel rotated 180
    # degrees and its channel axes swapped
    flipped = np.ascontiguousarray(k[::-1, ::-1].transpose(0, 1, 3, 2))
    return conv3x3_same(dout, flipped, np.zeros(k.shape[2]))


def maxpool2x2(x):
    """Returns ``(out, argmax)``; argmax is the 0..3 window slot, first max on ties."""
    return _BACKENDS[_active].maxpool2x2(x)


def maxpool2x2_backward(dout, arg):
    return _BACKENDS[_active].maxpool2x2_backward(dout, arg)
