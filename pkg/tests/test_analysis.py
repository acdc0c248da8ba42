"""Diagnostics tests: norms, compactness, feature quality, ensembles."""

import numpy as np
import pytest

from longtail import (
    BBNModel,
    BBNTrainConfig,
    ConfigError,
    DataError,
    Network,
    OptimizerConfig,
    SyntheticSpec,
    classifier_norms,
    compactness,
    count_norm_rank_correlation,
    ensemble_eval,
    feature_quality_eval,
    make_balanced_test,
    new_rng,
    synth_dataset,
    train_bbn,
)
from longtail.analysis import branch_feature_map
from longtail.baselines import retrain_head


# ------------------------------------------------------------------ norms

def test_unit_columns_have_zero_sigma():
    w = np.eye(4)
    report = classifier_norms(w)
    assert np.allclose(report.per_class_norm, 1.0)
    assert report.sigma == 0.0


def test_hand_computed_norms_and_sigma():
    w = np.array([[3.0, 0.0], [4.0, 0.0]])
    report = classifier_norms(w, source="CE")
    assert np.allclose(report.per_class_norm, [5.0, 0.0])
    assert report.sigma == 2.5  # population std of [5, 0]
    assert report.source == "CE"


def test_sigma_is_population_std():
    w = new_rng(0).standard_normal((6, 5))
    report = classifier_norms(w)
    assert abs(report.sigma - np.std(report.per_class_norm)) <= 1e-12


def test_norms_invariant_under_rotation():
    rng = new_rng(1)
    w = rng.standard_normal((8, 5))
    base = classifier_norms(w).per_class_norm
    for trial in range(5):
        q, _ = np.linalg.qr(rng.standard_normal((8, 8)))
        rotated = classifier_norms(q @ w).per_class_norm
        assert np.max(np.abs(rotated - base)) <= 1e-10


def test_norm_count_rank_correlation():
    counts = np.array([500, 300, 100, 50, 10])
    # norms proportional to counts -> perfect rank correlation
    w = np.vstack([counts / 500.0, np.zeros(5)])
    report = classifier_norms(w)
    assert count_norm_rank_correlation(report, counts) == pytest.approx(1.0)


def test_norm_report_csv(tmp_path):
    report = classifier_norms(np.eye(3), source="BBN-ALL")
    path = tmp_path / "norms.csv"
    report.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "class,norm"
    assert len(lines) == 4


# ------------------------------------------------------------ compactness

def test_identical_features_have_zero_distance():
    feats = np.tile([1.0, 2.0, 2.0], (5, 1))
    report = compactness(feats, np.zeros(5, dtype=int), normalize=False)
    assert report.per_class_mean_distance[0] == 0.0


def test_opposite_unit_vectors_centroid_zero_distance_one():
    feats = np.array([[1.0, 0.0], [-1.0, 0.0]])
    report = compactness(feats, np.zeros(2, dtype=int))
    assert np.allclose(report.per_class_centroid[0], 0.0)
    assert report.per_class_mean_distance[0] == pytest.approx(1.0)


def test_normalized_compactness_scale_invariant():
    rng = new_rng(2)
    feats = rng.standard_normal((30, 6))
    labels = rng.integers(0, 3, 30)
    a = compactness(feats, labels, normalize=True)
    b = compactness(10.0 * feats, labels, normalize=True)
    assert np.allclose(a.per_class_mean_distance, b.per_class_mean_distance, atol=1e-12)


def test_unnormalized_compactness_scales_linearly():
    rng = new_rng(3)
    feats = rng.standard_normal((20, 4))
    labels = rng.integers(0, 2, 20)
    a = compactness(feats, labels, normalize=False)
    b = compactness(3.0 * feats, labels, normalize=False)
    assert np.allclose(b.per_class_mean_distance, 3.0 * a.per_class_mean_distance)


def test_zero_rows_survive_normalization():
    feats = np.array([[0.0, 0.0], [1.0, 0.0]])
    report = compactness(feats, np.array([0, 0]))
    assert np.isfinite(report.per_class_mean_distance).all()


def test_empty_class_rejected():
    with pytest.raises(DataError):
        compactness(np.ones((3, 2)), np.array([0, 0, 2]))


def test_compactness_csv(tmp_path):
    report = compactness(np.ones((4, 2)), np.array([0, 0, 1, 1]))
    path = tmp_path / "compact.csv"
    report.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "class,mean_distance"
    assert len(lines) == 3


# -------------------------------------------------------- feature quality

def _small_setup():
    spec = SyntheticSpec.random_means(3, 4, 1.0, 0.8, seed=4)
    train = synth_dataset(spec, (24, 12, 6))
    test = make_balanced_test(spec, per_class=20)
    return train, test


def test_feature_quality_wiring_matches_retrain_head():
    train, test = _small_setup()
    model = BBNModel.create(4, 3, seed=5, trunk_widths=(8,), feature_dim=4)
    opt = OptimizerConfig(base_lr=0.1, warmup_epochs=0, milestones=(), weight_decay=0.0)
    cfg = BBNTrainConfig(t_max=3, batch_size=8, optimizer=opt, seed=6)
    train_bbn(model, train, cfg)
    out = feature_quality_eval(model, train, test, opt, retrain_epochs=5, seed=7)
    assert set(out) == {"BBN-CB", "BBN-RB"}
    _, direct = retrain_head(branch_feature_map(model, "conventional"), 3, "CE",
                             train, test, opt, 5, seed=7)
    assert out["BBN-CB"] == direct
    assert all(0.0 <= v <= 1.0 for v in out.values())


def test_branch_feature_map_validates_name():
    model = BBNModel.create(4, 3, seed=8, trunk_widths=(8,), feature_dim=4)
    with pytest.raises(ConfigError):
        branch_feature_map(model, "sideways")


# ---------------------------------------------------------------- ensemble

def _trained_net(train, seed):
    from longtail import train_manner
    net = Network.mlp((train.dim, 8, 4, train.num_classes), seed=seed)
    opt = OptimizerConfig(base_lr=0.1, warmup_epochs=0, milestones=(), weight_decay=0.0)
    train_manner(net, train, "CE", opt, epochs=5, seed=seed, batch_size=8)
    return net


def test_self_ensemble_equals_single_model():
    train, test = _small_setup()
    net = _trained_net(train, seed=9)
    from longtail import evaluate
    assert ensemble_eval(net, net, test) == evaluate(net, test)


def test_ensemble_is_symmetric():
    train, test = _small_setup()
    a = _trained_net(train, seed=10)
    b = _trained_net(train, seed=11)
    assert ensemble_eval(a, b, test) == ensemble_eval(b, a, test)


def test_disjoint_certain_predictions_tie_to_class_zero():
    # two linear stubs forced to opposite certain outputs
    rng = new_rng(12)
    a = Network.mlp((2, 2), seed=13)
    b = Network.mlp((2, 2), seed=14)
    a.layers[0].weight.value[...] = 0.0
    b.layers[0].weight.value[...] = 0.0
    a.layers[0].bias.value[...] = [100.0, -100.0]   # certain class 0
    b.layers[0].bias.value[...] = [-100.0, 100.0]   # certain class 1
    feats = rng.standard_normal((10, 2))
    labels = np.concatenate([np.zeros(5, dtype=int), np.ones(5, dtype=int)])
    from longtail import Dataset
    ds = Dataset(feats, labels)
    # averaged probs are [0.5, 0.5] everywhere; argmax resolves to class 0
    err = ensemble_eval(a, b, ds)
    assert err == 0.5


def test_class_count_mismatch_rejected():
    train, test = _small_setup()
    a = Network.mlp((4, 6, 3), seed=15)
    b = Network.mlp((4, 6, 5), seed=16)
    with pytest.raises(ConfigError):
        ensemble_eval(a, b, test)
