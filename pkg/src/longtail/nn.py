"""Minimal deterministic dense-network engine.

Everything is float64 numpy. A Network is a fixed sequence of Affine and
ReLU layers; forward returns the full activation trail and backward
accumulates parameter gradients by explicit chain rule, so the same trail
can be replayed or composed (the bilateral model backpropagates through a
shared trunk twice per step).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ShapeError, StateError


def derived_seed(seed: int, salt: int) -> int:
    """Derive an independent 64-bit stream seed from (seed, salt)."""
    ss = np.random.SeedSequence((int(seed), int(salt)))
    return int(ss.generate_state(1, np.uint64)[0])


def new_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


class Parameter:
    """A trainable tensor with its gradient and SGD momentum buffer."""

    def __init__(self, value: np.ndarray):
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.momentum_buf = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0


class Affine:
    """y = x @ weight + bias, with weight of shape (in_dim, out_dim)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(in_dim)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(rng.uniform(-bound, bound, size=(in_dim, out_dim)))
        self.bias = Parameter(np.zeros(out_dim))

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.value + self.bias.value

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        # Accumulate (never overwrite): the trunk of a two-branch model
        # receives contributions from both branch passes.
        self.weight.grad += x.T @ grad_out
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value.T

    def parameters(self):
        return [self.weight, self.bias]


class ReLU:
    """Elementwise max(x, 0)."""

    in_dim = None
    out_dim = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0)

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        return grad_out * (x > 0.0)

    def parameters(self):
        return []


class Network:
    """An ordered stack of Affine/ReLU layers.

    forward returns the activation trail: entry 0 is the input batch and
    entry k+1 is the output of layer k, so the last entry is the network
    output and backward can recover every layer's input from the trail.
    """

    def __init__(self, layers):
        self.layers = list(layers)
        dims = [(l.in_dim, l.out_dim) for l in self.layers if isinstance(l, Affine)]
        for (_, prev_out), (nxt_in, _) in zip(dims, dims[1:]):
            if prev_out != nxt_in:
                raise ShapeError(f"affine widths do not chain: {prev_out} -> {nxt_in}")

    @classmethod
    def mlp(cls, widths, seed: int, final_relu: bool = False) -> "Network":
        """Fully-connected net Affine->ReLU->...->Affine over the given widths.

        widths = (d0, d1, ..., dk) yields k affine layers; ReLU after each
        affine except the last unless final_relu is set.
        """
        rng = new_rng(seed)
        layers = []
        for i, (din, dout) in enumerate(zip(widths, widths[1:])):
            layers.append(Affine(din, dout, rng))
            if final_relu or i < len(widths) - 2:
                layers.append(ReLU())
        return cls(layers)

    @property
    def in_dim(self) -> int:
        for layer in self.layers:
            if isinstance(layer, Affine):
                return layer.in_dim
        raise StateError("network has no affine layer")

    @property
    def out_dim(self) -> int:
        for layer in reversed(self.layers):
            if isinstance(layer, Affine):
                return layer.out_dim
        raise StateError("network has no affine layer")

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ShapeError(f"expected a 2-d batch, got shape {x.shape}")
        acts = [x]
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Affine) and x.shape[1] != layer.in_dim:
                raise ShapeError(
                    f"layer {i} (Affine {layer.in_dim}x{layer.out_dim}) "
                    f"expects input width {layer.in_dim}, got {x.shape[1]}"
                )
            x = layer.forward(x)
            acts.append(x)
        return acts

    def output(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[-1]

    def backward(self, acts, grad_out: np.ndarray) -> np.ndarray:
        """Accumulate parameter grads; return the gradient w.r.t. the input."""
        if len(acts) != len(self.layers) + 1:
            raise StateError(
                f"activation trail length {len(acts)} does not match "
                f"{len(self.layers)} layers"
            )
        if grad_out.shape != acts[-1].shape:
            raise StateError(
                f"upstream grad shape {grad_out.shape} does not match "
                f"output shape {acts[-1].shape}"
            )
        g = grad_out
        for i in range(len(self.layers) - 1, -1, -1):
            g = self.layers[i].backward(acts[i], g)
        return g


@dataclass
class OptimizerConfig:
    """SGD-with-momentum settings plus the warmup/milestone LR schedule."""

    base_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 2e-4
    warmup_epochs: int = 5
    milestones: tuple = ()
    decay_factor: float = 0.01

    def __post_init__(self):
        self.milestones = tuple(int(m) for m in self.milestones)
        if self.base_lr <= 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {self.weight_decay}")
        if self.warmup_epochs < 0:
            raise ConfigError(f"warmup_epochs must be nonnegative, got {self.warmup_epochs}")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ConfigError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigError(f"milestones must be strictly increasing: {self.milestones}")
        if any(m <= self.warmup_epochs for m in self.milestones):
            raise ConfigError(
                f"milestones {self.milestones} must all exceed warmup_epochs "
                f"{self.warmup_epochs}"
            )


def lr_at(epoch: int, config: OptimizerConfig) -> float:
    """Learning rate for a 0-based epoch index.

    Linear ramp (epoch+1)/warmup * base_lr over the first warmup_epochs
    epochs, then base_lr scaled by decay_factor once per passed milestone.
    """
    if epoch < 0:
        raise ConfigError(f"epoch must be nonnegative, got {epoch}")
    if epoch < config.warmup_epochs:
        return config.base_lr * (epoch + 1) / config.warmup_epochs
    passed = sum(1 for m in config.milestones if epoch >= m)
    return config.base_lr * config.decay_factor**passed


def sgd_step(params, config: OptimizerConfig, lr: float) -> None:
    """In-place SGD update: buf = m*buf + (grad + wd*value); value -= lr*buf."""
    if lr < 0:
        raise ConfigError(f"learning rate must be nonnegative, got {lr}")
    for p in params:
        p.momentum_buf *= config.momentum
        p.momentum_buf += p.grad + config.weight_decay * p.value
        p.value -= lr * p.momentum_buf


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for stability."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise DataError(f"label {bad} out of range [0, {num_classes})")
    return labels.astype(np.intp)


def softmax_xent(logits: np.ndarray, labels, sample_weight=None):
    """Mean softmax cross-entropy over the batch and its logit gradient.

    With sample_weight w (one scalar per row), loss = mean(w_i * CE_i) and
    the gradient scales row-wise accordingly; weights default to 1.
    Returns (loss, grad_logits) with grad = (softmax - onehot) / B.
    """
    batch, num_classes = logits.shape
    labels = _check_labels(labels, num_classes)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_z[:, None]
    per_sample = -log_probs[np.arange(batch), labels]
    probs = np.exp(log_probs)
    grad = probs
    grad[np.arange(batch), labels] -= 1.0
    if sample_weight is not None:
        w = np.asarray(sample_weight, dtype=np.float64)
        per_sample = per_sample * w
        grad = grad * w[:, None]
    return float(per_sample.mean()), grad / batch
