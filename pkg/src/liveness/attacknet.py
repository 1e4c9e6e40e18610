"""AttackNet v2.2: configuration, initialisation, forward/backward, weights I/O.

Layer pipeline (channels-last)::

    phase k (k = 1, 2):
        conv -> LeakyReLU -> BN                  => skip tensor y
        {conv -> LeakyReLU -> BN} x R            => branch output z
        z + y -> maxpool 2x2 -> dropout(0.25)
    dense phase:
        flatten -> dense(128) -> tanh -> dropout(0.5) -> dense(2) -> softmax

Parameters live in one ordered mapping keyed by dotted names such as
``phase1.res2.bn.gamma``; :func:`parameter_table` fixes that order.
"""

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import layers
from ._binio import Reader, atomic_write, split_crc, with_crc
from .errors import ConfigError, CorruptionError, DegenerateBatchError, FormatError, ShapeError
from .layers import INFER, TRAIN, BatchNormParams, ConvParams, DenseParams
from .tensor import check_finite

WEIGHTS_MAGIC = b"ATKW1\x00"
WEIGHTS_VERSION = 1

_BN_FIELDS = ("gamma", "beta", "running_mean", "running_var")


@dataclass(frozen=True)
class ModelConfig:
    input_height: int = 64
    input_width: int = 64
    input_channels: int = 3
    phase1_filters: int = 16
    phase2_filters: int = 32
    residual_convs_per_phase: int = 2
    leaky_alpha: float = 0.2
    dropout_phase: float = 0.25
    dropout_dense: float = 0.5
    dense_units: int = 128
    num_classes: int = 2
    bn_momentum: float = layers.BN_MOMENTUM
    bn_epsilon: float = layers.BN_EPSILON
    canonical: bool = True

    def __post_init__(self):
        for name in ("input_height", "input_width", "input_channels", "phase1_filters",
                     "phase2_filters", "residual_convs_per_phase", "dense_units"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.input_height % 4 or self.input_width % 4:
            raise ConfigError(
                f"input size {self.input_height}x{self.input_width} must be divisible by 4 "
                "(two 2x2 pooling stages)")
        if self.num_classes != 2:
            raise ConfigError("only the two-class head is supported")
        if not 0.0 <= self.leaky_alpha < 1.0:
            raise ConfigError("leaky_alpha must lie in [0, 1)")
        for name in ("dropout_phase", "dropout_dense"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.canonical:
            expected = dict(leaky_alpha=0.2, dropout_phase=0.25, dropout_dense=0.5,
                            dense_units=128, num_classes=2)
            wrong = {k: getattr(self, k) for k, v in expected.items() if getattr(self, k) != v}
            if wrong:
                raise ConfigError(
                    f"canonical config cannot override {sorted(wrong)}; "
                    "set canonical=False")

    @property
    def flatten_length(self):
        return (self.input_height // 4) * (self.input_width // 4) * self.phase2_filters

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text):
        try:
            fields = json.loads(text)
            return cls(**fields)
        except (ValueError, TypeError) as exc:
            raise CorruptionError(f"invalid embedded model config: {exc}") from exc


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple
    trainable: bool
    init: str  # "he", "glorot", "zeros", "ones"


def _phase_prefixes(config):
    return [
        ("phase1", config.input_channels, config.phase1_filters),
        ("phase2", config.phase1_filters, config.phase2_filters),
    ]


def _block_names(config, phase):
    return [f"{phase}.entry"] + [
        f"{phase}.res{r + 1}" for r in range(config.residual_convs_per_phase)]


def parameter_table(config):
    """Canonical ordered list of every stored tensor, running stats included."""
    table = []
    for phase, c_in, c_out in _phase_prefixes(config):
        for i, block in enumerate(_block_names(config, phase)):
            cin = c_in if i == 0 else c_out
            table.append(ParamSpec(f"{block}.conv.kernels", (3, 3, cin, c_out), True, "he"))
            table.append(ParamSpec(f"{block}.conv.bias", (c_out,), True, "zeros"))
            table.append(ParamSpec(f"{block}.bn.gamma", (c_out,), True, "ones"))
            table.append(ParamSpec(f"{block}.bn.beta", (c_out,), True, "zeros"))
            table.append(ParamSpec(f"{block}.bn.running_mean", (c_out,), False, "zeros"))
            table.append(ParamSpec(f"{block}.bn.running_var", (c_out,), False, "ones"))
    table.append(ParamSpec("dense.weights", (config.flatten_length, config.dense_units),
                           True, "glorot"))
    table.append(ParamSpec("dense.bias", (config.dense_units,), True, "zeros"))
    table.append(ParamSpec("output.weights", (config.dense_units, config.num_classes),
                           True, "glorot"))
    table.append(ParamSpec("output.bias", (config.num_classes,), True, "zeros"))
    return table


def trainable_names(config):
    return [p.name for p in parameter_table(config) if p.trainable]


def build_attacknet(config):
    """Describe the layer pipeline as an ordered list of ``(stage, details)`` rows."""
    if not isinstance(config, ModelConfig):
        raise ConfigError("build_attacknet needs a ModelConfig")
    h, w = config.input_height, config.input_width
    stages = []
    for phase, c_in, c_out in _phase_prefixes(config):
        for i, block in enumerate(_block_names(config, phase)):
            cin = c_in if i == 0 else c_out
            stages.append(("conv3x3", dict(block=block, in_channels=cin, out_channels=c_out,
                                           height=h, width=w)))
            stages.append(("leaky_relu", dict(block=block, alpha=config.leaky_alpha)))
            stages.append(("batch_norm", dict(block=block, channels=c_out)))
            if i == 0:
                stages.append(("save_skip", dict(phase=phase)))
        stages.append(("residual_add", dict(phase=phase)))
        h, w = h // 2, w // 2
        stages.append(("maxpool2x2", dict(phase=phase, height=h, width=w, channels=c_out)))
        stages.append(("dropout", dict(phase=phase, rate=config.dropout_phase)))
    stages.append(("flatten", dict(length=config.flatten_length)))
    stages.append(("dense", dict(units=config.dense_units)))
    stages.append(("tanh", {}))
    stages.append(("dropout", dict(rate=config.dropout_dense)))
    stages.append(("dense", dict(units=config.num_classes)))
    stages.append(("softmax", {}))
    return stages


def param_count(config):
    return sum(math.prod(p.shape) for p in parameter_table(config) if p.trainable)


@dataclass(frozen=True)
class ModelWeights:
    config: ModelConfig
    params: dict = field(repr=False)

    def __post_init__(self):
        table = parameter_table(self.config)
        if list(self.params) != [p.name for p in table]:
            raise CorruptionError("parameter names/order do not match the config")
        for spec in table:
            arr = self.params[spec.name]
            if arr.shape != spec.shape:
                raise CorruptionError(
                    f"{spec.name}: stored shape {arr.shape} != expected {spec.shape}")
            arr.flags.writeable = False

    def conv(self, block):
        return ConvParams(self.params[f"{block}.conv.kernels"], self.params[f"{block}.conv.bias"])

    def bn(self, block):
        p = self.params
        return BatchNormParams(*(p[f"{block}.bn.{f}"] for f in _BN_FIELDS),
                               momentum=self.config.bn_momentum,
                               epsilon=self.config.bn_epsilon)

    def dense(self, name):
        return DenseParams(self.params[f"{name}.weights"], self.params[f"{name}.bias"])

    def replace(self, updates):
        """New weights with some tensors swapped out; order is preserved."""
        merged = {k: np.array(updates[k], dtype=np.float64) if k in updates else v
                  for k, v in self.params.items()}
        return ModelWeights(self.config, merged)

    def equal(self, other):
        return (self.config == other.config
                and all(np.array_equal(a, other.params[k]) for k, a in self.params.items()))


def init_weights(config, seed):
    """He-normal convs (LeakyReLU gain), Glorot-uniform dense layers, zero biases."""
    rng = np.random.default_rng(seed)
    gain = math.sqrt(2.0 / (1.0 + config.leaky_alpha ** 2))
    params = {}
    for spec in parameter_table(config):
        if spec.init == "he":
            fan_in = spec.shape[0] * spec.shape[1] * spec.shape[2]
            params[spec.name] = rng.standard_normal(spec.shape) * (gain / math.sqrt(fan_in))
        elif spec.init == "glorot":
            limit = math.sqrt(6.0 / (spec.shape[0] + spec.shape[1]))
            params[spec.name] = rng.uniform(-limit, limit, spec.shape)
        elif spec.init == "ones":
            params[spec.name] = np.ones(spec.shape)
        else:
            params[spec.name] = np.zeros(spec.shape)
    return ModelWeights(config, params)


# -- forward / backward -------------------------------------------------------

@dataclass
class ForwardCache:
    mode: str
    steps: dict = field(default_factory=dict)
    taps: dict = field(default_factory=dict)
    running_stats: dict = field(default_factory=dict)
    logits: Optional[np.ndarray] = None


def _check_batch(config, batch, mode):
    expected = (config.input_height, config.input_width, config.input_channels)
    if batch.ndim != 4 or batch.shape[1:] != expected:
        raise ShapeError(f"batch must be [N, {expected[0]}, {expected[1]}, {expected[2]}], "
                         f"got {batch.shape}")
    if mode == TRAIN and batch.shape[0] < 2:
        raise DegenerateBatchError("train mode needs at least 2 samples per batch")


def _conv_block(weights, block, x, mode, cache):
    out, c_conv = layers.conv2d(x, weights.conv(block))
    out, c_act = layers.leaky_relu(out, weights.config.leaky_alpha)
    out, bn_new, c_bn = layers.batch_norm(out, weights.bn(block), mode)
    cache.steps[block] = (c_conv, c_act, c_bn)
    if mode == TRAIN:
        cache.running_stats[f"{block}.bn.running_mean"] = bn_new.running_mean
        cache.running_stats[f"{block}.bn.running_var"] = bn_new.running_var
    return out


def _conv_block_backward(block, dout, cache, grads):
    c_conv, c_act, c_bn = cache.steps[block]
    g_bn = layers.batch_norm_backward(dout, c_bn)
    g_act = layers.leaky_relu_backward(g_bn.input_grad, c_act)
    g_conv = layers.conv2d_backward(g_act.input_grad, c_conv)
    grads[f"{block}.conv.kernels"] = g_conv.param_grads["kernels"]
    grads[f"{block}.conv.bias"] = g_conv.param_grads["bias"]
    grads[f"{block}.bn.gamma"] = g_bn.param_grads["gamma"]
    grads[f"{block}.bn.beta"] = g_bn.param_grads["beta"]
    return g_conv.input_grad


def forward_batch(weights, batch, mode, rng=None):
    """Run the network on ``batch`` and return ``(probs, cache)``.

    ``rng`` (a ``numpy.random.Generator``) drives the dropout masks and is
    only needed in train mode. The cache holds what :func:`backward_batch`
    needs, the updated BN running statistics (train mode), and intermediate
    taps such as ``phase1.skip`` and ``phase1.merged``.
    """
    config = weights.config
    batch = np.asarray(batch, dtype=np.float64)
    _check_batch(config, batch, mode)
    if mode == TRAIN and rng is None:
        raise ValueError("train mode needs an rng for dropout")
    cache = ForwardCache(mode)

    x = batch
    for phase, _, _ in _phase_prefixes(config):
        blocks = _block_names(config, phase)
        y = _conv_block(weights, blocks[0], x, mode, cache)
        z = y
        for block in blocks[1:]:
            z = _conv_block(weights, block, z, mode, cache)
        merged = layers.residual_add(z, y)
        pooled, c_pool = layers.max_pool_2x2(merged)
        x, c_drop = layers.dropout(pooled, config.dropout_phase, mode, rng)
        cache.steps[f"{phase}.pool"] = (c_pool, c_drop)
        cache.taps[f"{phase}.skip"] = y
        cache.taps[f"{phase}.merged"] = merged

    n = x.shape[0]
    cache.steps["flatten"] = x.shape
    h, c_dense = layers.dense(x.reshape(n, -1), weights.dense("dense"))
    h, c_tanh = layers.tanh_activation(h)
    h, c_drop = layers.dropout(h, config.dropout_dense, mode, rng)
    logits, c_out = layers.dense(h, weights.dense("output"))
    cache.steps["head"] = (c_dense, c_tanh, c_drop, c_out)
    cache.logits = check_finite(logits, "logits")
    return layers.softmax(logits), cache


def backward_batch(weights, cache, grad_logits):
    """Gradients of the loss w.r.t. every trainable tensor, in canonical order."""
    config = weights.config
    grads = {}

    c_dense, c_tanh, c_drop, c_out = cache.steps["head"]
    g = layers.dense_backward(grad_logits, c_out)
    grads["output.weights"], grads["output.bias"] = g.param_grads["weights"], g.param_grads["bias"]
    d = layers.dropout_backward(g.input_grad, c_drop).input_grad
    d = layers.tanh_backward(d, c_tanh).input_grad
    g = layers.dense_backward(d, c_dense)
    grads["dense.weights"], grads["dense.bias"] = g.param_grads["weights"], g.param_grads["bias"]
    d = g.input_grad.reshape(cache.steps["flatten"])

    for phase, _, _ in reversed(_phase_prefixes(config)):
        c_pool, c_drop = cache.steps[f"{phase}.pool"]
        d = layers.dropout_backward(d, c_drop).input_grad
        d_merged = layers.max_pool_2x2_backward(d, c_pool).input_grad
        d_branch, d_skip = layers.residual_add_backward(d_merged)
        blocks = _block_names(config, phase)
        for block in reversed(blocks[1:]):
            d_branch = _conv_block_backward(block, d_branch, cache, grads)
        d = _conv_block_backward(blocks[0], d_branch + d_skip, cache, grads)

    return {name: grads[name] for name in trainable_names(config)}


def predict_proba(weights, samples, batch_size=64):
    """Infer-mode class probabilities, evaluated in chunks."""
    rows = [forward_batch(weights, samples[i:i + batch_size], INFER)[0]
            for i in range(0, len(samples), batch_size)]
    return np.concatenate(rows, axis=0)


# -- serialisation -----------------------------------------------------------

def encode_weights(weights):
    config_blob = weights.config.to_json().encode("utf-8")
    parts = [WEIGHTS_MAGIC, struct.pack("<HI", WEIGHTS_VERSION, len(config_blob)), config_blob]
    for name, arr in weights.params.items():
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return with_crc(b"".join(parts))


def decode_weights(blob):
    if len(blob) < len(WEIGHTS_MAGIC) or blob[:len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
        raise FormatError("not an AttackNet weights file (bad magic)")
    r = Reader(blob, len(WEIGHTS_MAGIC))
    (version,) = r.unpack("H")
    if version != WEIGHTS_VERSION:
        raise FormatError(f"unsupported weights version {version}")
    (config_len,) = r.unpack("I")
    try:
        config_text = r.take(config_len).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptionError("config blob is not UTF-8") from exc
    config = ModelConfig.from_json(config_text)

    params = {}
    for spec in parameter_table(config):
        (name_len,) = r.unpack("H")
        name = r.take(name_len).decode("utf-8", errors="replace")
        if name != spec.name:
            raise CorruptionError(f"expected tensor {spec.name!r}, found {name!r}")
        (rank,) = r.unpack("B")
        dims = r.unpack(f"{rank}I")
        if dims != spec.shape:
            raise CorruptionError(f"{name}: stored shape {dims} != expected {spec.shape}")
        count = math.prod(dims)
        params[name] = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
    r.take(4)
    if r.remaining:
        raise CorruptionError(f"{r.remaining} unexpected trailing bytes")
    split_crc(blob)
    return ModelWeights(config, params)


def save_weights(weights, path):
    atomic_write(path, encode_weights(weights))


def load_weights(path):
    with open(path, "rb") as fh:
        return decode_weights(fh.read())
