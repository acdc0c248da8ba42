"""Diagnostics: classifier norm profiles, intra-class compactness,
per-branch feature quality, and two-model ensembles.

The per-class Euclidean norm of a classifier column tracks how strongly
the classifier favors that class; under plain cross-entropy training the
profile follows the long-tailed class counts. Compactness measures how
tightly a class's (unit-normalized) features cluster around their
centroid.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .baselines import retrain_head
from .bbn import BBNModel
from .data import Dataset
from .errors import ConfigError, DataError
from .nn import Network, OptimizerConfig, Parameter, softmax


@dataclass
class NormReport:
    """Per-class classifier column norms with their population std."""

    per_class_norm: np.ndarray
    sigma: float
    source: str = ""

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "norm"])
            for i, v in enumerate(self.per_class_norm):
                writer.writerow([i, repr(float(v))])


@dataclass
class CompactnessReport:
    """Mean distance of each class's features to their class centroid."""

    per_class_mean_distance: np.ndarray
    per_class_centroid: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "mean_distance"])
            for i, v in enumerate(self.per_class_mean_distance):
                writer.writerow([i, repr(float(v))])


def classifier_norms(weight: np.ndarray, source: str = "") -> NormReport:
    """Column norms of a (feature_dim x num_classes) classifier matrix."""
    w = weight.value if isinstance(weight, Parameter) else np.asarray(weight)
    norms = np.linalg.norm(w, axis=0)
    return NormReport(per_class_norm=norms, sigma=float(norms.std()), source=source)


def count_norm_rank_correlation(report: NormReport, class_counts) -> float:
    """Spearman rank correlation between class counts and column norms."""
    rho, _ = stats.spearmanr(np.asarray(class_counts), report.per_class_norm)
    return float(rho)


def compactness(features: np.ndarray, labels, normalize: bool = True,
                num_classes: int | None = None) -> CompactnessReport:
    """Average distance from each class's feature rows to their centroid.

    With normalize, rows are first scaled to unit Euclidean norm (zero
    rows stay zero) so the measure ignores feature scale.
    """
    feats = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    if normalize:
        norms = np.linalg.norm(feats, axis=1, keepdims=True)
        feats = feats / np.where(norms == 0, 1.0, norms)  # zero rows stay zero
    centroids = np.empty((num_classes, feats.shape[1]))
    distances = np.empty(num_classes)
    for i in range(num_classes):
        rows = feats[labels == i]
        if rows.shape[0] == 0:
            raise DataError(f"class {i} has no feature rows")
        centroids[i] = rows.mean(axis=0)
        distances[i] = np.linalg.norm(rows - centroids[i], axis=1).mean()
    return CompactnessReport(per_class_mean_distance=distances, per_class_centroid=centroids)


def branch_feature_map(model: BBNModel, which: str) -> Network:
    """Frozen feature extractor trunk+branch for 'conventional' or 'rebalancing'."""
    if which == "conventional":
        branch = model.branch_c
    elif which == "rebalancing":
        branch = model.branch_r
    else:
        raise ConfigError(f"branch must be 'conventional' or 'rebalancing', got {which!r}")
    return Network(model.trunk.layers + branch.layers)


def feature_quality_eval(
    model: BBNModel,
    train_ds: Dataset,
    test_ds: Dataset,
    config: OptimizerConfig,
    retrain_epochs: int,
    seed: int,
    batch_size: int = 64,
) -> dict:
    """Representation quality of each branch, measured by retraining a
    fresh classifier on the frozen trunk+branch features.

    Returns {"BBN-CB": error, "BBN-RB": error} for the conventional and
    re-balancing branches.
    """
    out = {}
    for tag, which in (("BBN-CB", "conventional"), ("BBN-RB", "rebalancing")):
        extractor = branch_feature_map(model, which)
        _, err = retrain_head(
            extractor, model.num_classes, "CE", train_ds, test_ds, config,
            retrain_epochs, seed, batch_size=batch_size,
        )
        out[tag] = err
    return out


def ensemble_eval(model_a: Network, model_b: Network, test_ds: Dataset) -> float:
    """Error rate of averaging two models' softmax probabilities.

    Symmetric in its arguments; prediction ties resolve to the lowest
    class index.
    """
    if model_a.out_dim != model_b.out_dim:
        raise ConfigError(
            f"models disagree on class count: {model_a.out_dim} vs {model_b.out_dim}"
        )
    if model_a.out_dim != test_ds.num_classes:
        raise ConfigError(
            f"models predict {model_a.out_dim} classes, dataset has {test_ds.num_classes}"
        )
    probs = 0.5 * (softmax(model_a.output(test_ds.features))
                   + softmax(model_b.output(test_ds.features)))
    pred = np.argmax(probs, axis=1)
    return float(np.mean(pred != test_ds.labels))
