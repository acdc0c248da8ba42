"""Mini-batch index samplers: uniform, balanced, reversed.

The uniform sampler walks a fresh permutation each epoch so every sample
appears exactly once per epoch. The balanced and reversed samplers first
pick a class (uniformly, or from probabilities proportional to the
reciprocal of the class size), then pick a member of that class with
replacement. All three are fully determined by (seed, labels, batch_size).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .nn import new_rng

SAMPLER_KINDS = ("uniform", "balanced", "reversed")


@dataclass(frozen=True)
class ClassWeights:
    """Per-class weights w and the normalized sampling probabilities P."""

    w: np.ndarray
    P: np.ndarray


def reversed_probs(class_counts) -> ClassWeights:
    """Tail-favoring class probabilities: w_i = N_max/N_i, P_i = w_i/sum(w)."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if (counts < 1).any():
        raise DataError(f"class counts must all be >= 1, got {class_counts}")
    w = counts.max() / counts
    return ClassWeights(w=w, P=w / w.sum())


def _class_index_lists(labels: np.ndarray):
    labels = np.asarray(labels)
    num_classes = int(labels.max()) + 1
    return [np.flatnonzero(labels == i) for i in range(num_classes)]


class _Sampler:
    """Common state: seeded stream plus per-class index lists."""

    kind: str

    def __init__(self, labels, seed: int):
        self.seed = int(seed)
        self.rng = new_rng(seed)
        self.class_index_lists = _class_index_lists(labels)
        self.num_samples = sum(len(ix) for ix in self.class_index_lists)
        # Flat concatenation so a whole batch of within-class picks is one gather.
        self._flat = np.concatenate(self.class_index_lists)
        counts = np.array([len(ix) for ix in self.class_index_lists])
        if (counts == 0).any():
            raise DataError("every class needs at least one sample")
        self._counts = counts
        self._starts = np.concatenate(([0], np.cumsum(counts)[:-1]))

    def _members_of(self, classes: np.ndarray) -> np.ndarray:
        """Uniform with-replacement pick inside each requested class."""
        u = self.rng.random(len(classes))
        within = (u * self._counts[classes]).astype(np.intp)
        return self._flat[self._starts[classes] + within]


class UniformSampler(_Sampler):
    """Each sample exactly once per epoch, order reshuffled every epoch."""

    kind = "uniform"

    def __init__(self, labels, seed: int):
        super().__init__(labels, seed)
        self.epoch = 0
        self.cursor = 0
        self._reshuffle()

    def _reshuffle(self):
        # Per-epoch derived stream: seed xor epoch.
        rng = new_rng(self.seed ^ self.epoch)
        self.epoch_permutation = rng.permutation(self.num_samples)

    def next_batch(self, batch_size: int) -> np.ndarray:
        end = min(self.cursor + batch_size, self.num_samples)
        batch = self.epoch_permutation[self.cursor:end]
        self.cursor = end
        if self.cursor >= self.num_samples:
            self.epoch += 1
            self.cursor = 0
            self._reshuffle()
        return batch


class BalancedSampler(_Sampler):
    """Class drawn uniformly, then a member with replacement."""

    kind = "balanced"

    def next_batch(self, batch_size: int) -> np.ndarray:
        u = self.rng.random(batch_size)
        classes = (u * len(self.class_index_lists)).astype(np.intp)
        return self._members_of(classes)


class ReversedSampler(_Sampler):
    """Class drawn from reversed_probs (inverse-CDF), then a member."""

    kind = "reversed"

    def __init__(self, labels, seed: int):
        super().__init__(labels, seed)
        self.probs = reversed_probs(self._counts).P
        self._cdf = np.cumsum(self.probs)

    def next_batch(self, batch_size: int) -> np.ndarray:
        u = self.rng.random(batch_size)
        classes = np.searchsorted(self._cdf, u, side="right")
        # Guard the u ~ 1.0 edge where float cumsum can fall short of 1.
        classes = np.minimum(classes, len(self.probs) - 1)
        return self._members_of(classes)


def make_sampler(kind: str, labels, seed: int) -> _Sampler:
    if kind == "uniform":
        return UniformSampler(labels, seed)
    if kind == "balanced":
        return BalancedSampler(labels, seed)
    if kind == "reversed":
        return ReversedSampler(labels, seed)
    raise ConfigError(f"unknown sampler kind {kind!r}, expected one of {SAMPLER_KINDS}")


def steps_per_epoch(num_samples: int, batch_size: int) -> int:
    """ceil(N / batch_size); all samplers share this epoch length."""
    return -(-num_samples // batch_size)
