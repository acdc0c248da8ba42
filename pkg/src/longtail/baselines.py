"""Training manners (CE, RW, RS), two-stage re-balancing, and the
representation/classifier decoupling harness.

CE trains on the raw long-tailed stream, RS swaps in the class-balanced
sampler, RW keeps the uniform stream but scales per-sample losses by
inverse class frequency. The decoupling grid trains a representation with
one manner, freezes everything below the final affine layer, and retrains
that classifier from scratch with another manner.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigError, NumericError, StateError
from .nn import (
    Affine,
    Network,
    OptimizerConfig,
    derived_seed,
    lr_at,
    new_rng,
    sgd_step,
    softmax_xent,
)
from .samplers import make_sampler, steps_per_epoch

MANNERS = ("CE", "RW", "RS")

# (sampler kind, uses inverse-frequency loss weights)
_MANNER_RECIPE = {
    "CE": ("uniform", False),
    "RS": ("balanced", False),
    "RW": ("uniform", True),
}


def reweight_factors(class_counts) -> np.ndarray:
    """Inverse-frequency loss weights, rescaled to dataset-mean 1.

    Raw weight 1/N_i would shrink the effective learning rate as imbalance
    grows; rescaling so the mean weight over all N training samples is 1
    keeps CE and RW on the same footing (weights are exactly 1 when counts
    are equal).
    """
    counts = np.asarray(class_counts, dtype=np.float64)
    n = counts.sum()
    return n / (len(counts) * counts)


def predict(net: Network, features: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    return np.argmax(net.output(features), axis=1)


def evaluate(net: Network, ds: Dataset) -> float:
    """Fraction of ds misclassified by net."""
    return float(np.mean(predict(net, ds.features) != ds.labels))


def train_with_sampler(
    net: Network,
    train_ds: Dataset,
    sampler_kind: str,
    config: OptimizerConfig,
    epochs: int,
    seed: int,
    batch_size: int = 64,
    class_loss_weights=None,
    test_ds: Dataset | None = None,
    on_epoch=None,
) -> list[dict]:
    """Generic seeded training loop; returns per-epoch metrics rows.

    class_loss_weights, when given, scales each sample's loss by its
    class's weight. test_ds adds a balanced-test error to every row.
    on_epoch is called with each finished row (the CLI streams these to
    disk so a crash preserves partial history).
    """
    sampler = make_sampler(sampler_kind, train_ds.labels, seed)
    steps = steps_per_epoch(train_ds.num_samples, batch_size)
    weights = None
    if class_loss_weights is not None:
        weights = np.asarray(class_loss_weights, dtype=np.float64)
    metrics = []
    for epoch in range(epochs):
        lr = lr_at(epoch, config)
        losses = np.empty(steps)
        for step in range(steps):
            idx = sampler.next_batch(batch_size)
            x, y = train_ds.features[idx], train_ds.labels[idx]
            acts = net.forward(x)
            sw = weights[y] if weights is not None else None
            loss, grad = softmax_xent(acts[-1], y, sample_weight=sw)
            if not np.isfinite(loss):
                raise NumericError(f"training loss became non-finite at epoch {epoch}")
            net.zero_grad()
            net.backward(acts, grad)
            sgd_step(net.parameters(), config, lr)
            losses[step] = loss
        row = {
            "epoch": epoch,
            "alpha": None,
            "lr": lr,
            "train_loss": float(losses.mean()),
            "test_error": evaluate(net, test_ds) if test_ds is not None else None,
        }
        metrics.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return metrics


def train_manner(
    net: Network,
    train_ds: Dataset,
    manner: str,
    config: OptimizerConfig,
    epochs: int,
    seed: int,
    batch_size: int = 64,
    test_ds: Dataset | None = None,
    on_epoch=None,
) -> list[dict]:
    """Train net in place with one of the CE/RW/RS manners."""
    if manner not in MANNERS:
        raise ConfigError(f"unknown manner {manner!r}, expected one of {MANNERS}")
    sampler_kind, reweighted = _MANNER_RECIPE[manner]
    weights = reweight_factors(train_ds.class_counts) if reweighted else None
    return train_with_sampler(
        net,
        train_ds,
        sampler_kind,
        config,
        epochs,
        seed,
        batch_size=batch_size,
        class_loss_weights=weights,
        test_ds=test_ds,
        on_epoch=on_epoch,
    )


def split_classifier(net: Network):
    """(feature extractor layers, final affine classifier) of a network."""
    if not net.layers or not isinstance(net.layers[-1], Affine):
        raise StateError("network must end in an affine classifier")
    return net.layers[:-1], net.layers[-1]


def extract_features(net: Network, features: np.ndarray) -> np.ndarray:
    """Run features through everything below the final affine layer."""
    trunk_layers, _ = split_classifier(net)
    if not trunk_layers:
        return np.asarray(features, dtype=np.float64)
    return Network(trunk_layers).output(features)


def retrain_head(
    extractor: Network,
    num_classes: int,
    classifier_manner: str,
    train_ds: Dataset,
    test_ds: Dataset,
    config: OptimizerConfig,
    epochs: int,
    seed: int,
    batch_size: int = 64,
):
    """Train a fresh affine classifier on a frozen feature extractor.

    Features for both splits are computed once up front; the extractor's
    parameters are never touched. Returns (classifier Network,
    balanced-test error).
    """
    train_feats = extractor.output(train_ds.features)
    test_feats = extractor.output(test_ds.features)
    feat_train = Dataset(train_feats, train_ds.labels, num_classes=train_ds.num_classes)
    feat_test = Dataset(test_feats, test_ds.labels, num_classes=test_ds.num_classes)
    classifier = Network([Affine(train_feats.shape[1], num_classes, new_rng(seed))])
    train_manner(
        classifier,
        feat_train,
        classifier_manner,
        config,
        epochs,
        derived_seed(seed, 0x5A11),
        batch_size=batch_size,
    )
    return classifier, evaluate(classifier, feat_test)


def freeze_and_retrain_classifier(
    net: Network,
    classifier_manner: str,
    train_ds: Dataset,
    test_ds: Dataset,
    config: OptimizerConfig,
    epochs: int,
    seed: int,
    batch_size: int = 64,
):
    """Drop net's final affine layer and retrain a fresh one from scratch."""
    trunk_layers, _ = split_classifier(net)
    return retrain_head(
        Network(trunk_layers), net.out_dim, classifier_manner,
        train_ds, test_ds, config, epochs, seed, batch_size=batch_size,
    )


def cross_dataset_transfer(
    net: Network,
    train_ds: Dataset,
    test_ds: Dataset,
    classifier_manner: str,
    config: OptimizerConfig,
    epochs: int,
    seed: int,
    batch_size: int = 64,
) -> float:
    """Reuse net's frozen feature extractor on another dataset.

    A fresh classifier is trained on train_ds features computed through
    the foreign extractor; returns the balanced-test error on test_ds.
    """
    if train_ds.dim != net.in_dim:
        raise ConfigError(
            f"dataset dimension {train_ds.dim} does not match extractor input {net.in_dim}"
        )
    _, err = freeze_and_retrain_classifier(
        net, classifier_manner, train_ds, test_ds, config, epochs, seed, batch_size
    )
    return err


def two_stage_finetune(
    net: Network,
    train_ds: Dataset,
    rebalance: str,
    stage2_epochs: int,
    stage2_lr: float,
    seed: int,
    config: OptimizerConfig | None = None,
    batch_size: int = 64,
    test_ds: Dataset | None = None,
    on_epoch=None,
) -> list[dict]:
    """Deferred re-balancing: continue training the whole net at a small lr.

    rebalance "DRW" keeps the uniform stream with inverse-frequency loss
    weights; "DRS" switches to the balanced sampler. The net is expected
    to arrive pre-trained with CE.
    """
    if rebalance not in ("DRW", "DRS"):
        raise ConfigError(f"rebalance must be 'DRW' or 'DRS', got {rebalance!r}")
    base = config or OptimizerConfig()
    stage2 = OptimizerConfig(
        base_lr=stage2_lr,
        momentum=base.momentum,
        weight_decay=base.weight_decay,
        warmup_epochs=0,
        milestones=(),
        decay_factor=1.0,
    )
    weights = reweight_factors(train_ds.class_counts) if rebalance == "DRW" else None
    sampler_kind = "uniform" if rebalance == "DRW" else "balanced"
    return train_with_sampler(
        net,
        train_ds,
        sampler_kind,
        stage2,
        stage2_epochs,
        seed,
        batch_size=batch_size,
        class_loss_weights=weights,
        test_ds=test_ds,
        on_epoch=on_epoch,
    )


@dataclass
class DecoupleGridResult:
    """Balanced-test errors for all representation x classifier manners.

    errors has shape (3, 3, len(seeds)) indexed by (representation manner,
    classifier manner, seed) in MANNERS order; mean_errors averages over
    seeds.
    """

    errors: np.ndarray
    seeds: list[int]
    runtime_s: float

    @property
    def mean_errors(self) -> np.ndarray:
        return self.errors.mean(axis=2)

    def to_csv(self, path) -> None:
        """Rows = representation manner, columns = classifier manner."""
        mean = self.mean_errors
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("representation," + ",".join(MANNERS) + "\n")
            for i, rep in enumerate(MANNERS):
                fh.write(rep + "," + ",".join(repr(v) for v in mean[i]) + "\n")


def decouple_grid(
    train_ds: Dataset,
    test_ds: Dataset,
    config: OptimizerConfig,
    seeds,
    net_widths,
    epochs: int,
    retrain_epochs: int,
    batch_size: int = 64,
) -> DecoupleGridResult:
    """Two-stage 3x3 grid: every representation manner against every
    classifier manner, each cell averaged over the given seeds.

    Stage-1 networks are shared across the three classifier manners of
    their row, mirroring the fixed-extractor protocol.
    """
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ConfigError("need at least one seed")
    t0 = time.perf_counter()
    errors = np.empty((len(MANNERS), len(MANNERS), len(seeds)))
    for k, seed in enumerate(seeds):
        for i, rep in enumerate(MANNERS):
            net = Network.mlp(net_widths, derived_seed(seed, 0x100 + i))
            train_manner(net, train_ds, rep, config, epochs, derived_seed(seed, 0x200 + i),
                         batch_size=batch_size)
            for j, clf in enumerate(MANNERS):
                _, err = freeze_and_retrain_classifier(
                    net, clf, train_ds, test_ds, config, retrain_epochs,
                    derived_seed(seed, 0x300 + 3 * i + j), batch_size=batch_size,
                )
                errors[i, j, k] = err
    return DecoupleGridResult(errors=errors, seeds=seeds, runtime_s=time.perf_counter() - t0)
