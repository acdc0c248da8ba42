"""Two-branch model with a shared trunk and cumulative learning.

The conventional branch sees the raw long-tailed stream through a uniform
sampler; the re-balancing branch sees a reversed (tail-favoring) stream.
Both branches share the trunk. A per-epoch trade-off weight alpha scales
the two branches' features before their classifiers, shifting emphasis
from representation learning to tail-aware classifier learning as
training progresses; at inference both branches weigh 0.5.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, FormatError, NumericError, ShapeError
from .nn import (
    Affine,
    Network,
    OptimizerConfig,
    Parameter,
    derived_seed,
    lr_at,
    new_rng,
    sgd_step,
    softmax,
    softmax_xent,
)
from .samplers import SAMPLER_KINDS, UniformSampler, make_sampler, steps_per_epoch

SCHEDULES = (
    "equal_weight",
    "beta_distribution",
    "parabolic_increment",
    "linear_decay",
    "cosine_decay",
    "parabolic_decay",
)

_MAGIC = b"BBNM"
_VERSION = 1


def alpha_at(epoch: int, t_max: int, schedule, rng=None) -> float:
    """Trade-off weight for epoch T of t_max under the named strategy.

    A numeric schedule pins alpha to that constant. beta_distribution
    draws Beta(0.2, 0.2) fresh from rng (one draw per call; the training
    loop calls once per epoch and logs the value).
    """
    if isinstance(schedule, (int, float)) and not isinstance(schedule, bool):
        value = float(schedule)
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"constant alpha must be in [0, 1], got {value}")
        return value
    if t_max < 1:
        raise ConfigError(f"t_max must be >= 1, got {t_max}")
    if not 0 <= epoch <= t_max:
        raise ConfigError(f"epoch {epoch} outside [0, {t_max}]")
    progress = epoch / t_max
    if schedule == "equal_weight":
        return 0.5
    if schedule == "beta_distribution":
        if rng is None:
            raise ConfigError("beta_distribution schedule needs a random generator")
        return float(rng.beta(0.2, 0.2))
    if schedule == "parabolic_increment":
        return progress**2
    if schedule == "linear_decay":
        return 1.0 - progress
    if schedule == "cosine_decay":
        return math.cos(progress * math.pi / 2.0)
    if schedule == "parabolic_decay":
        return 1.0 - progress**2
    raise ConfigError(f"unknown schedule {schedule!r}, expected one of {SCHEDULES}")


class BBNModel:
    """Shared trunk, two branch blocks, and two bias-free classifiers."""

    def __init__(self, trunk: Network, branch_c: Network, branch_r: Network,
                 classifier_c: Parameter, classifier_r: Parameter):
        if branch_c.in_dim != trunk.out_dim or branch_r.in_dim != trunk.out_dim:
            raise ShapeError("branch input width must equal trunk output width")
        shapes_c = [type(l).__name__ for l in branch_c.layers]
        shapes_r = [type(l).__name__ for l in branch_r.layers]
        if shapes_c != shapes_r or branch_c.out_dim != branch_r.out_dim:
            raise ShapeError("branches must have identical layer shapes")
        if classifier_c.shape != classifier_r.shape:
            raise ShapeError("classifiers must have identical shapes")
        if classifier_c.shape[0] != branch_c.out_dim:
            raise ShapeError(
                f"classifier expects {classifier_c.shape[0]}-d features, "
                f"branches emit {branch_c.out_dim}"
            )
        self.trunk = trunk
        self.branch_c = branch_c
        self.branch_r = branch_r
        self.classifier_c = classifier_c
        self.classifier_r = classifier_r

    @classmethod
    def create(cls, in_dim: int, num_classes: int, seed: int,
               trunk_widths=(64, 64), feature_dim: int = 32) -> "BBNModel":
        """Seeded construction; the two branches start from independent draws."""
        trunk = Network.mlp((in_dim, *trunk_widths), derived_seed(seed, 1), final_relu=True)
        branch_c = Network.mlp((trunk_widths[-1], feature_dim), derived_seed(seed, 2),
                               final_relu=True)
        branch_r = Network.mlp((trunk_widths[-1], feature_dim), derived_seed(seed, 3),
                               final_relu=True)
        bound = 1.0 / math.sqrt(feature_dim)
        classifier_c = Parameter(
            new_rng(derived_seed(seed, 4)).uniform(-bound, bound, (feature_dim, num_classes))
        )
        classifier_r = Parameter(
            new_rng(derived_seed(seed, 5)).uniform(-bound, bound, (feature_dim, num_classes))
        )
        return cls(trunk, branch_c, branch_r, classifier_c, classifier_r)

    @property
    def in_dim(self) -> int:
        return self.trunk.in_dim

    @property
    def feature_dim(self) -> int:
        return self.branch_c.out_dim

    @property
    def num_classes(self) -> int:
        return self.classifier_c.shape[1]

    def parameters(self):
        return (
            self.trunk.parameters()
            + self.branch_c.parameters()
            + self.branch_r.parameters()
            + [self.classifier_c, self.classifier_r]
        )

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def branch_features(self, x: np.ndarray):
        """(f_c, f_r) for the same batch through both branches (inference path)."""
        trunk_out = self.trunk.output(x)
        return self.branch_c.output(trunk_out), self.branch_r.output(trunk_out)


def forward_bilateral(model: BBNModel, x_c: np.ndarray, x_r: np.ndarray):
    """Feature vectors of the conventional and re-balancing batches."""
    f_c = model.branch_c.output(model.trunk.output(x_c))
    f_r = model.branch_r.output(model.trunk.output(x_r))
    return f_c, f_r


def aggregate_logits(f_c, f_r, classifier_c, classifier_r, alpha: float) -> np.ndarray:
    """z = (alpha * f_c) @ W_c + ((1 - alpha) * f_r) @ W_r.

    Alpha scales the features before the classifiers; for these linear
    classifiers that is identical to scaling the per-branch logits.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
    wc = classifier_c.value if isinstance(classifier_c, Parameter) else classifier_c
    wr = classifier_r.value if isinstance(classifier_r, Parameter) else classifier_r
    return (alpha * f_c) @ wc + ((1.0 - alpha) * f_r) @ wr


def bbn_loss(z: np.ndarray, y_c, y_r, alpha: float):
    """Convex combination of cross-entropies against both batches' labels.

    loss = alpha * CE(softmax(z), y_c) + (1 - alpha) * CE(softmax(z), y_r);
    returns (loss, grad wrt z).
    """
    loss_c, grad_c = softmax_xent(z, y_c)
    loss_r, grad_r = softmax_xent(z, y_r)
    return alpha * loss_c + (1.0 - alpha) * loss_r, alpha * grad_c + (1.0 - alpha) * grad_r


def bilateral_step(model: BBNModel, x_c, y_c, x_r, y_r, alpha: float,
                   config: OptimizerConfig, lr: float) -> float:
    """One training step: forward both paths, backprop both into the
    shared trunk, apply SGD. Returns the step loss."""
    trail_tc = model.trunk.forward(x_c)
    trail_bc = model.branch_c.forward(trail_tc[-1])
    trail_tr = model.trunk.forward(x_r)
    trail_br = model.branch_r.forward(trail_tr[-1])
    f_c, f_r = trail_bc[-1], trail_br[-1]

    z = aggregate_logits(f_c, f_r, model.classifier_c, model.classifier_r, alpha)
    loss, grad_z = bbn_loss(z, y_c, y_r, alpha)
    if not np.isfinite(loss):
        raise NumericError("bilateral training loss became non-finite")

    model.zero_grad()
    model.classifier_c.grad += (alpha * f_c).T @ grad_z
    model.classifier_r.grad += ((1.0 - alpha) * f_r).T @ grad_z
    grad_fc = alpha * (grad_z @ model.classifier_c.value.T)
    grad_fr = (1.0 - alpha) * (grad_z @ model.classifier_r.value.T)
    # Trunk grads accumulate across both branch paths.
    model.trunk.backward(trail_tc, model.branch_c.backward(trail_bc, grad_fc))
    model.trunk.backward(trail_tr, model.branch_r.backward(trail_br, grad_fr))
    sgd_step(model.parameters(), config, lr)
    return loss


@dataclass
class BBNTrainConfig:
    """Everything that determines a bilateral training run."""

    t_max: int
    batch_size: int
    optimizer: OptimizerConfig
    schedule: object = "parabolic_decay"
    seed: int = 0
    rebalance_sampler: str = "reversed"

    def __post_init__(self):
        if self.t_max < 1:
            raise ConfigError(f"t_max must be >= 1, got {self.t_max}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.rebalance_sampler not in SAMPLER_KINDS:
            raise ConfigError(
                f"rebalance_sampler {self.rebalance_sampler!r} not in {SAMPLER_KINDS}"
            )
        if not isinstance(self.schedule, (int, float)) and self.schedule not in SCHEDULES:
            raise ConfigError(f"unknown schedule {self.schedule!r}")


def train_bbn(model: BBNModel, train_ds: Dataset, config: BBNTrainConfig,
              test_ds: Dataset | None = None, on_epoch=None) -> list[dict]:
    """Cumulative-learning loop over t_max epochs.

    Per epoch T (1-based, T/t_max drives the schedule) one alpha is fixed;
    per step one batch comes from the uniform sampler and one from the
    re-balancing sampler, and both losses combine with weights alpha and
    1 - alpha. Epoch length is the uniform sampler's, so every training
    sample passes through the conventional branch once per epoch.
    """
    uniform = UniformSampler(train_ds.labels, derived_seed(config.seed, 0xC04))
    rebalance = make_sampler(
        config.rebalance_sampler, train_ds.labels, derived_seed(config.seed, 0x2EB)
    )
    alpha_rng = new_rng(derived_seed(config.seed, 0xA1FA))
    steps = steps_per_epoch(train_ds.num_samples, config.batch_size)
    metrics = []
    for epoch in range(config.t_max):
        alpha = alpha_at(epoch + 1, config.t_max, config.schedule, alpha_rng)
        lr = lr_at(epoch, config.optimizer)
        losses = np.empty(steps)
        for step in range(steps):
            idx_c = uniform.next_batch(config.batch_size)
            idx_r = rebalance.next_batch(len(idx_c))
            losses[step] = bilateral_step(
                model,
                train_ds.features[idx_c], train_ds.labels[idx_c],
                train_ds.features[idx_r], train_ds.labels[idx_r],
                alpha, config.optimizer, lr,
            )
        row = {
            "epoch": epoch,
            "alpha": alpha,
            "lr": lr,
            "train_loss": float(losses.mean()),
            "test_error": evaluate_bbn(model, test_ds) if test_ds is not None else None,
        }
        metrics.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return metrics


def infer(model: BBNModel, x: np.ndarray):
    """Equal-weight inference: both branches at alpha 0.5.

    Returns (predicted labels, class probabilities); argmax ties resolve
    to the lowest class index.
    """
    f_c, f_r = model.branch_features(np.asarray(x, dtype=np.float64))
    z = aggregate_logits(f_c, f_r, model.classifier_c, model.classifier_r, 0.5)
    probs = softmax(z)
    return np.argmax(z, axis=1), probs


def evaluate_bbn(model: BBNModel, ds: Dataset) -> float:
    """Balanced-test error rate of equal-weight inference."""
    pred, _ = infer(model, ds.features)
    return float(np.mean(pred != ds.labels))


def combined_classifier(model: BBNModel) -> np.ndarray:
    """0.5 * (W_c + W_r): the single matrix equivalent to equal-weight
    inference whenever both branches emit the same features."""
    return 0.5 * (model.classifier_c.value + model.classifier_r.value)


def save_model(model: BBNModel, path) -> None:
    """Binary checkpoint: magic "BBNM", version, dims, then every
    parameter tensor in declaration order as raw little-endian float64."""
    trunk_widths = [l.out_dim for l in model.trunk.layers if isinstance(l, Affine)]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<QQ", model.in_dim, len(trunk_widths)))
        fh.write(struct.pack(f"<{len(trunk_widths)}Q", *trunk_widths))
        fh.write(struct.pack("<QQ", model.feature_dim, model.num_classes))
        for p in model.parameters():
            fh.write(p.value.astype("<f8").tobytes(order="C"))


def load_model(path) -> BBNModel:
    """Reconstruct a checkpointed model bit-exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}", 0)
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    try:
        in_dim, n_trunk = struct.unpack_from("<QQ", blob, 8)
        widths = struct.unpack_from(f"<{n_trunk}Q", blob, 24)
        feature_dim, num_classes = struct.unpack_from("<QQ", blob, 24 + 8 * n_trunk)
    except struct.error:
        raise FormatError("truncated header", len(blob)) from None
    model = BBNModel.create(in_dim, num_classes, seed=0,
                            trunk_widths=widths, feature_dim=feature_dim)
    offset = 40 + 8 * n_trunk
    for p in model.parameters():
        nbytes = p.value.size * 8
        if offset + nbytes > len(blob):
            raise FormatError("truncated parameter payload", len(blob))
        p.value[...] = np.frombuffer(blob, dtype="<f8", count=p.value.size,
                                     offset=offset).reshape(p.value.shape)
        offset += nbytes
    if offset != len(blob):
        raise FormatError(f"trailing bytes: expected {offset}", offset)
    return model
