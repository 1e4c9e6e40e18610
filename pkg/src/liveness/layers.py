"""Forward and backward passes for the AttackNet layer kinds.

Every forward op returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache and returns :class:`LayerGrads`.
Layouts are channels-last: images are ``[N, H, W, C]``, conv kernels are
``[3, 3, C_in, C_out]`` and dense weights ``[F_in, F_out]``.
"""

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DegenerateBatchError, InputError, LabelError, ShapeError
from .tensor import add_elementwise, matmul

TRAIN = "train"
INFER = "infer"

BN_MOMENTUM = 0.9
BN_EPSILON = 1e-5


class LayerGrads(NamedTuple):
    input_grad: np.ndarray
    param_grads: dict


@dataclass(frozen=True)
class ConvParams:
    kernels: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        k = self.kernels
        if k.ndim != 4 or k.shape[:2] != (3, 3):
            raise ShapeError(f"conv kernels must be [3, 3, C_in, C_out], got {k.shape}")
        if self.bias.shape != (k.shape[3],):
            raise ShapeError(f"conv bias must be [{k.shape[3]}], got {self.bias.shape}")

    @property
    def in_channels(self):
        return self.kernels.shape[2]

    @property
    def out_channels(self):
        return self.kernels.shape[3]


@dataclass(frozen=True)
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    epsilon: float = BN_EPSILON

    def __post_init__(self):
        c = self.gamma.shape
        for name in ("beta", "running_mean", "running_var"):
            if getattr(self, name).shape != c:
                raise ShapeError(f"batch-norm {name} shape {getattr(self, name).shape} != {c}")
        if not 0.0 < self.momentum < 1.0:
            raise ValueError(f"momentum must lie in (0, 1), got {self.momentum}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if np.any(self.running_var < 0):
            raise ValueError("running variance must be non-negative")

    @classmethod
    def fresh(cls, channels, momentum=BN_MOMENTUM, epsilon=BN_EPSILON):
        return cls(
            gamma=np.ones(channels),
            beta=np.zeros(channels),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
            momentum=momentum,
            epsilon=epsilon,
        )


@dataclass(frozen=True)
class DenseParams:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"dense weights {self.weights.shape} and bias {self.bias.shape} disagree")


def _check_mode(mode):
    if mode not in (TRAIN, INFER):
        raise ValueError(f"mode must be {TRAIN!r} or {INFER!r}, got {mode!r}")


# -- convolution -------------------------------------------------------------

def conv2d(x, params):
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be [N, H, W, C], got {x.shape}")
    if x.shape[3] != params.in_channels:
        raise ShapeError(
            f"conv2d expects {params.in_channels} input channels, got {x.shape[3]}")
    out = kernels.conv3x3_same(np.ascontiguousarray(x), params.kernels, params.bias)
    return out, (x, params)


def conv2d_backward(dout, cache):
    x, params = cache
    dout = np.ascontiguousarray(dout)
    dk, db = kernels.conv3x3_same_grad_params(np.ascontiguousarray(x), dout)
    dx = kernels.conv3x3_same_grad_input(dout, params.kernels)
    return LayerGrads(dx, {"kernels": dk, "bias": db})


# -- activations -------------------------------------------------------------

def leaky_relu(x, alpha=0.2):
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    positive = x > 0
    return np.where(positive, x, alpha * x), (positive, alpha)


def leaky_relu_backward(dout, cache):
    positive, alpha = cache
    return LayerGrads(np.where(positive, dout, alpha * dout), {})


def tanh_activation(x):
    out = np.tanh(x)
    return out, out


def tanh_backward(dout, cache):
    return LayerGrads(dout * (1.0 - cache * cache), {})


# -- batch normalisation -----------------------------------------------------

def batch_norm(x, params, mode):
    """Per-channel normalisation over the N, H, W axes.

    Returns ``(out, new_params, cache)``. In train mode ``new_params`` carries
    the updated running statistics; in infer mode it is ``params`` itself.
    """
    _check_mode(mode)
    if x.shape[-1] != params.gamma.shape[0]:
        raise ShapeError(
            f"batch_norm expects {params.gamma.shape[0]} channels, got {x.shape[-1]}")
    axes = tuple(range(x.ndim - 1))
    count = x.size // x.shape[-1]

    if mode == TRAIN:
        if count < 2:
            raise DegenerateBatchError(
                f"batch_norm in train mode needs >= 2 values per channel, got {count}")
        mean = x.mean(axis=axes)
        centered = x - mean
        var = (centered * centered).mean(axis=axes)
        m = params.momentum
        new_params = replace(
            params,
            running_mean=m * params.running_mean + (1.0 - m) * mean,
            running_var=m * params.running_var + (1.0 - m) * var,
        )
    else:
        mean, var = params.running_mean, params.running_var
        centered = x - mean
        new_params = params

    inv_std = 1.0 / np.sqrt(var + params.epsilon)
    xhat = centered * inv_std
    out = params.gamma * xhat + params.beta
    return out, new_params, (xhat, inv_std, params.gamma, mode, count)


def batch_norm_backward(dout, cache):
    xhat, inv_std, gamma, mode, count = cache
    axes = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma
    if mode == TRAIN:
        dx = (inv_std / count) * (
            count * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    else:
        dx = dxhat * inv_std
    return LayerGrads(dx, {"gamma": dgamma, "beta": dbeta})


# -- pooling / dropout -------------------------------------------------------

def max_pool_2x2(x):
    if x.ndim != 4 or x.shape[1] % 2 or x.shape[2] % 2:
        raise ShapeError(f"max_pool_2x2 needs [N, H, W, C] with even H, W; got {x.shape}")
    out, arg = kernels.maxpool2x2(np.ascontiguousarray(x))
    return out, arg


def max_pool_2x2_backward(dout, cache):
    return LayerGrads(kernels.maxpool2x2_backward(np.ascontiguousarray(dout), cache), {})


def dropout(x, rate, mode, rng):
    """Inverted dropout with a per-element mask drawn from ``rng``."""
    _check_mode(mode)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode == INFER or rate == 0.0:
        return x, None
    scale = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * scale, scale


def dropout_backward(dout, cache):
    return LayerGrads(dout if cache is None else dout * cache, {})


# -- dense / head ------------------------------------------------------------

def dense(x, params):
    if x.ndim != 2 or x.shape[1] != params.weights.shape[0]:
        raise ShapeError(
            f"dense expects [N, {params.weights.shape[0]}] input, got {x.shape}")
    return matmul(x, params.weights) + params.bias, (x, params)


def dense_backward(dout, cache):
    x, params = cache
    dw = matmul(np.ascontiguousarray(x.T), dout)
    dx = matmul(dout, np.ascontiguousarray(params.weights.T))
    return LayerGrads(dx, {"weights": dw, "bias": dout.sum(axis=0)})


def softmax(logits):
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeError(f"softmax expects [N, 2] logits, got {logits.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_with_grad(probs, labels):
    """Mean categorical cross-entropy and its gradient w.r.t. the pre-softmax logits."""
    labels = np.asarray(labels)
    n = probs.shape[0]
    if labels.shape != (n,):
        raise InputError(f"expected {n} labels, got shape {labels.shape}")
    if not np.all((labels == 0) | (labels == 1)):
        raise LabelError("labels must be 0 (bonafide) or 1 (attacker)")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise InputError("probability rows must sum to 1")
    labels = labels.astype(np.intp)
    picked = probs[np.arange(n), labels]
    loss = -np.mean(np.log(np.maximum(picked, 1e-12)))
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    return float(loss), (probs - onehot) / n


def residual_add(branch_out, skip_in):
    return add_elementwise(branch_out, skip_in)


def residual_add_backward(dout):
    return dout, dout
