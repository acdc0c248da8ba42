"""Synthetic long-tailed datasets and a portable binary file format.

Class-conditional isotropic Gaussians stand in for the image benchmarks:
class i contributes round(n_max * beta^(-i/(C-1))) training points around
its mean, so beta is exactly N_max/N_min at the endpoints. Test sets are
balanced, mirroring how long-tailed benchmarks are evaluated.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .nn import derived_seed, new_rng

# Salt for the balanced test split so it never shares a stream with training
# data generated from the same user seed.
_TEST_STREAM_SALT = 0x7E57

_MAGIC = b"LTDS"
_VERSION = 1


@dataclass(frozen=True)
class ImbalanceProfile:
    """Long-tail shape: C classes, head count n_max, imbalance factor beta."""

    num_classes: int
    n_max: int
    beta: float

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.n_max < 1:
            raise ConfigError(f"n_max must be positive, got {self.n_max}")
        if self.beta < 1.0:
            raise ConfigError(f"imbalance factor must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian mixture family: one mean per class, shared isotropic noise."""

    class_means: np.ndarray  # (C, d)
    noise_scale: float
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self, "class_means", np.ascontiguousarray(self.class_means, dtype=np.float64)
        )
        if self.class_means.ndim != 2:
            raise ConfigError("class_means must be a (C, d) matrix")
        if self.noise_scale < 0:
            raise ConfigError(f"noise_scale must be nonnegative, got {self.noise_scale}")

    @classmethod
    def random_means(cls, num_classes, dim, mean_scale, noise_scale, seed,
                     signal_dim=None) -> "SyntheticSpec":
        """Draw class means as mean_scale * standard normal rows (seeded).

        With signal_dim < dim the means occupy only the first signal_dim
        coordinates; the remaining dimensions carry pure noise, so a model
        has to estimate the discriminative subspace from data.
        """
        rng = new_rng(derived_seed(seed, 0xC1A55))
        k = dim if signal_dim is None else int(signal_dim)
        if not 1 <= k <= dim:
            raise ConfigError(f"signal_dim must be in [1, {dim}], got {k}")
        means = np.zeros((num_classes, dim))
        means[:, :k] = mean_scale * rng.standard_normal((num_classes, k))
        return cls(class_means=means, noise_scale=noise_scale, seed=seed)

    @property
    def num_classes(self) -> int:
        return self.class_means.shape[0]

    @property
    def dim(self) -> int:
        return self.class_means.shape[1]


class Dataset:
    """Immutable feature matrix + labels + per-class counts."""

    def __init__(self, features: np.ndarray, labels: np.ndarray, num_classes: int | None = None):
        self.features = np.array(features, dtype=np.float64, order="C")
        self.labels = np.array(labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise DataError("features must be (N, d) and labels (N,)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.features.shape[0]} feature rows vs {self.labels.shape[0]} labels"
            )
        if self.labels.size == 0:
            raise DataError("dataset is empty")
        if self.labels.min() < 0:
            raise DataError(f"negative label {self.labels.min()}")
        if num_classes is None:
            num_classes = int(self.labels.max()) + 1
        elif self.labels.max() >= num_classes:
            raise DataError(f"label {self.labels.max()} out of range [0, {num_classes})")
        self.class_counts = np.bincount(self.labels, minlength=num_classes)
        if (self.class_counts == 0).any():
            missing = int(np.flatnonzero(self.class_counts == 0)[0])
            raise DataError(f"class {missing} has no samples")
        self.features.flags.writeable = False
        self.labels.flags.writeable = False
        self.class_counts.flags.writeable = False

    @property
    def num_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_counts)

    def __eq__(self, other):
        return (
            isinstance(other, Dataset)
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )


def make_counts(profile: ImbalanceProfile) -> np.ndarray:
    """Per-class sample counts N_i = round(n_max * beta^(-i/(C-1))).

    Round-half-up, floored at 1 sample, so N_0 == n_max exactly and
    N_max/N_min == beta within rounding.
    """
    c = profile.num_classes
    counts = np.empty(c, dtype=np.int64)
    for i in range(c):
        raw = profile.n_max * profile.beta ** (-i / (c - 1))
        counts[i] = max(1, math.floor(raw + 0.5))
    return counts


def synth_dataset(spec: SyntheticSpec, counts) -> Dataset:
    """Sample counts[i] points of class i around its mean, class-major order."""
    counts = np.asarray(counts, dtype=np.int64)
    if len(counts) != spec.num_classes:
        raise ConfigError(
            f"{len(counts)} counts for {spec.num_classes} class means"
        )
    rng = new_rng(spec.seed)
    return _sample_classes(spec, counts, rng)


def make_balanced_test(spec: SyntheticSpec, per_class: int) -> Dataset:
    """Balanced evaluation split drawn from an independent derived stream."""
    counts = np.full(spec.num_classes, int(per_class), dtype=np.int64)
    rng = new_rng(derived_seed(spec.seed, _TEST_STREAM_SALT))
    return _sample_classes(spec, counts, rng)


def _sample_classes(spec, counts, rng) -> Dataset:
    blocks = []
    labels = []
    for i, n in enumerate(counts):
        noise = rng.standard_normal((int(n), spec.dim))
        blocks.append(spec.class_means[i] + spec.noise_scale * noise)
        labels.append(np.full(int(n), i, dtype=np.int64))
    return Dataset(np.vstack(blocks), np.concatenate(labels))


def save_dataset(ds: Dataset, path) -> None:
    """Write the LTDS binary format (little-endian, see load_dataset)."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<QQQ", ds.num_samples, ds.dim, ds.num_classes))
        fh.write(ds.features.astype("<f8").tobytes(order="C"))
        fh.write(ds.labels.astype("<u4").tobytes())


def load_dataset(path) -> Dataset:
    """Read an LTDS file: magic "LTDS", u32 version, u64 N/d/C, N*d f64, N u32.

    Raises FormatError (with the byte offset) on a bad magic, unsupported
    version, truncated payload, trailing bytes, or an out-of-range label.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}", 0)
    if len(blob) < 8:
        raise FormatError("truncated header: missing version", len(blob))
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if len(blob) < 32:
        raise FormatError("truncated header: missing dimensions", len(blob))
    n, d, c = struct.unpack_from("<QQQ", blob, 8)
    feat_bytes = n * d * 8
    label_bytes = n * 4
    expected = 32 + feat_bytes + label_bytes
    if len(blob) != expected:
        kind = "truncated payload" if len(blob) < expected else "trailing bytes"
        raise FormatError(f"{kind}: file is {len(blob)} bytes, expected {expected}", len(blob))
    features = np.frombuffer(blob, dtype="<f8", count=n * d, offset=32).reshape(n, d)
    labels = np.frombuffer(blob, dtype="<u4", count=n, offset=32 + feat_bytes)
    if labels.size and labels.max() >= c:
        bad = int(np.flatnonzero(labels >= c)[0])
        raise FormatError(
            f"label {int(labels[bad])} out of range [0, {c})", 32 + feat_bytes + 4 * bad
        )
    return Dataset(features.astype(np.float64), labels.astype(np.int64), num_classes=c)
