"""Sampler distribution and determinism tests (all streams seeded)."""

import numpy as np
import pytest

from longtail import (
    BalancedSampler,
    ConfigError,
    DataError,
    ReversedSampler,
    UniformSampler,
    make_sampler,
    reversed_probs,
    steps_per_epoch,
)


def _labels(counts):
    return np.concatenate([np.full(n, i) for i, n in enumerate(counts)])


def _empirical_class_freq(sampler, labels, draws, batch=1000):
    hits = np.zeros(int(labels.max()) + 1)
    done = 0
    while done < draws:
        idx = sampler.next_batch(min(batch, draws - done))
        hits += np.bincount(labels[idx], minlength=len(hits))
        done += len(idx)
    return hits / done


# --------------------------------------------------------- reversed probs

def test_equal_counts_give_equal_probs():
    cw = reversed_probs([100, 100])
    assert np.allclose(cw.P, [0.5, 0.5], atol=1e-15)


def test_hand_evaluated_probabilities():
    cw = reversed_probs([100, 50, 10])
    assert np.allclose(cw.w, [1.0, 2.0, 10.0])
    assert np.allclose(cw.P, [1 / 13, 2 / 13, 10 / 13], atol=1e-15)


def test_rarest_class_is_most_probable():
    rng = np.random.default_rng(0)
    for _ in range(20):
        counts = rng.integers(1, 500, size=rng.integers(2, 12))
        cw = reversed_probs(counts)
        assert np.argmax(cw.P) == np.argmin(counts)


def test_probs_scale_invariant():
    a = reversed_probs([100, 50, 10])
    b = reversed_probs([700, 350, 70])
    assert np.allclose(a.P, b.P, atol=1e-15)


def test_probs_sum_to_one():
    cw = reversed_probs([313, 41, 7, 1])
    assert abs(cw.P.sum() - 1.0) < 1e-12
    assert np.all(cw.P > 0)


def test_zero_count_rejected():
    with pytest.raises(DataError):
        reversed_probs([10, 0, 5])


# ----------------------------------------------------------- uniform

def test_single_batch_epoch_is_a_permutation():
    sampler = UniformSampler(_labels([4, 4]), seed=1)
    batch = sampler.next_batch(8)
    assert sorted(batch.tolist()) == list(range(8))


def test_epoch_multiset_covers_every_index():
    labels = _labels([6, 3, 2])
    n = len(labels)
    sampler = UniformSampler(labels, seed=2)
    for _ in range(3):  # property holds for every epoch
        seen = []
        for _ in range(steps_per_epoch(n, 4)):
            seen.extend(sampler.next_batch(4).tolist())
        assert sorted(seen) == list(range(n))


def test_final_batch_may_be_short():
    sampler = UniformSampler(_labels([5, 5]), seed=3)
    sizes = [len(sampler.next_batch(4)) for _ in range(3)]
    assert sizes == [4, 4, 2]


def test_epochs_are_reshuffled():
    sampler = UniformSampler(_labels([50, 50]), seed=4)
    first = sampler.next_batch(100).tolist()
    second = sampler.next_batch(100).tolist()
    assert sorted(first) == sorted(second)
    assert first != second


def test_same_seed_same_stream():
    labels = _labels([10, 20, 5])
    for kind in ("uniform", "balanced", "reversed"):
        a = make_sampler(kind, labels, seed=99)
        b = make_sampler(kind, labels, seed=99)
        for _ in range(5):
            assert np.array_equal(a.next_batch(7), b.next_batch(7))


# ----------------------------------------------------------- balanced

def test_single_class_degenerates_to_replacement_sampling():
    sampler = BalancedSampler(_labels([5]), seed=5)
    batch = sampler.next_batch(200)
    assert set(batch.tolist()) <= set(range(5))
    assert len(np.unique(batch)) > 1


def test_balanced_frequencies_near_uniform():
    labels = _labels([1000, 100, 10, 5, 1])
    sampler = BalancedSampler(labels, seed=6)
    freq = _empirical_class_freq(sampler, labels, 1_000_000)
    assert np.all(np.abs(freq - 0.2) < 0.005)


def test_singleton_class_can_repeat_within_batch():
    labels = _labels([50, 1])
    sampler = BalancedSampler(labels, seed=7)
    batch = sampler.next_batch(64)
    assert np.sum(batch == 50) >= 2  # the lone tail index repeats


# ----------------------------------------------------------- reversed

def test_equal_counts_match_balanced_distribution():
    labels = _labels([40, 40, 40])
    freq = _empirical_class_freq(ReversedSampler(labels, seed=8), labels, 300_000)
    assert np.all(np.abs(freq - 1 / 3) < 0.005)


def test_reversed_frequencies_match_inverse_count_target():
    labels = _labels([100, 50, 10])
    sampler = ReversedSampler(labels, seed=9)
    freq = _empirical_class_freq(sampler, labels, 1_000_000)
    target = np.array([1 / 13, 2 / 13, 10 / 13])
    assert np.all(np.abs(freq - target) < 0.005)


def test_most_frequent_class_sampled_least():
    labels = _labels([200, 60, 25])
    sampler = ReversedSampler(labels, seed=10)
    freq = _empirical_class_freq(sampler, labels, 100_000)
    assert np.argmin(freq) == 0


def test_total_variation_bound_at_one_million_draws():
    labels = _labels([100, 50, 10])
    freq = _empirical_class_freq(ReversedSampler(labels, seed=11), labels, 1_000_000)
    target = np.array([1 / 13, 2 / 13, 10 / 13])
    assert 0.5 * np.abs(freq - target).sum() <= 0.01


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError):
        make_sampler("alias", _labels([3, 3]), seed=0)
