"""Mini-batch Adam training for AttackNet."""

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import layers
from .attacknet import backward_batch, forward_batch, predict_proba, trainable_names
from .errors import ConfigError, InputError, NumericError, ShapeError
from .layers import TRAIN

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2 (batch norm)")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if not self.adam_epsilon > 0:
            raise ConfigError("adam_epsilon must be positive")


class AdamState(NamedTuple):
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, like):
        return cls(np.zeros_like(like), np.zeros_like(like), 0)


def adam_update(param, grad, state, config):
    """One Adam step for a single tensor. Returns ``(new_param, new_state)``."""
    if not (param.shape == grad.shape == state.m.shape == state.v.shape):
        raise ShapeError("param, grad and moment shapes must agree")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    b1, b2 = config.beta1, config.beta2
    t = state.t + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * (grad * grad)
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new = param - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    return new, AdamState(m, v, t)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    batches: int
    dropped: int
    holdout_loss: Optional[float] = None
    holdout_accuracy: Optional[float] = None


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)

    def __len__(self):
        return len(self.epochs)

    def to_dict(self):
        return {"epochs": [vars(e).copy() for e in self.epochs]}


def evaluate_loss(weights, dataset):
    """Infer-mode mean cross-entropy and accuracy on a dataset."""
    probs = predict_proba(weights, dataset.samples)
    loss, _ = layers.cross_entropy_with_grad(probs, dataset.labels)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == dataset.labels))
    return loss, accuracy


def _batches(n, batch_size, order):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_model(init, train_set, holdout=None, config=TrainConfig(), on_epoch=None):
    """Train from ``init`` and return ``(weights, history)``.

    Shuffling and dropout draw from independent generators spawned from
    ``config.seed``, so the run is a pure function of its inputs. A final
    batch with a single sample is skipped because batch norm cannot use it.
    """
    mcfg = init.config
    if len(train_set) == 0:
        raise InputError("empty training set")
    expected = (mcfg.input_height, mcfg.input_width, mcfg.input_channels)
    if tuple(train_set.image_shape) != expected:
        raise ShapeError(f"training images are {train_set.image_shape}, model expects {expected}")
    if len(train_set) < 2:
        raise InputError("training needs at least 2 samples")

    shuffle_seq, dropout_seq = np.random.SeedSequence(config.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    weights = init
    names = trainable_names(mcfg)
    states = {k: AdamState.fresh(init.params[k]) for k in names}
    history = TrainHistory()
    samples, labels = train_set.samples, train_set.labels
    n = len(train_set)

    for epoch in range(1, config.epochs + 1):
        order = shuffle_rng.permutation(n) if config.shuffle else np.arange(n)
        loss_sum = correct = seen = batches = dropped = 0
        for b, idx in enumerate(_batches(n, config.batch_size, order)):
            if len(idx) < 2:
                dropped += len(idx)
                continue
            x, y = samples[idx], labels[idx]
            probs, cache = forward_batch(weights, x, TRAIN, dropout_rng)
            loss, grad_logits = layers.cross_entropy_with_grad(probs, y)
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = backward_batch(weights, cache, grad_logits)
            updates = dict(cache.running_stats)
            for k in names:
                try:
                    updates[k], states[k] = adam_update(weights.params[k], grads[k], states[k], config)
                except NumericError as exc:
                    raise NumericError(f"{exc} for {k} at epoch {epoch}, batch {b}") from exc
            weights = weights.replace(updates)
            loss_sum += loss * len(idx)
            correct += int(np.sum(np.argmax(probs, axis=1) == y))
            seen += len(idx)
            batches += 1
        if seen == 0:
            raise InputError("no usable batch: every batch had fewer than 2 samples")

        record = EpochRecord(epoch, loss_sum / seen, correct / seen, batches, dropped)
        if holdout is not None:
            record.holdout_loss, record.holdout_accuracy = evaluate_loss(weights, holdout)
        history.epochs.append(record)
        log.info("epoch %d: loss %.6f acc %.4f", epoch, record.train_loss, record.train_accuracy)
        if on_epoch is not None:
            on_epoch(record)

    return weights, history
