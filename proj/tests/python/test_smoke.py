import json
import math

import numpy as np
import pytest

import hsim


def test_geometry_values():
    assert hsim.cosine_sim([1.0, 1.0], [1.0, 0.0]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)
    assert hsim.poincare_distance([0.5, 0.0], [0.0, 0.0]) == pytest.approx(math.log(3), abs=1e-12)
    z = hsim.exp_map([1.0, 0.0], 1.0)
    assert z[0] == pytest.approx(0.35258151046796257928, abs=1e-15)
    s = hsim.embedding_similarity([1.0, 0.0], [0.0, 0.0], kind="negexp_poincare")
    assert s == pytest.approx(0.47865395506407985817, abs=1e-14)


def test_errors_surface_as_hsim_error():
    with pytest.raises(hsim.HsimError, match="ZeroVector"):
        hsim.cosine_sim([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(hsim.HsimError, match="OutsideBall"):
        hsim.poincare_distance([1.0, 0.0], [0.0, 0.0])


def test_margins_three_class_example():
    stats = np.array([[0.9, 0.5, 0.1], [0.5, 0.8, 0.3], [0.1, 0.3, 0.7]])
    neg = hsim.build_margin_table(stats, [0.2, 0.3, 0.4])
    assert [neg.m_neg[0, 1], neg.m_neg[0, 2], neg.m_neg[1, 2]] == pytest.approx([0.5, 0.3, 0.4], abs=1e-12)
    rec = hsim.build_margin_table(stats, [0.2, 0.3, 0.4], inter_transform="reciprocal")
    assert rec.m_neg[1, 2] == pytest.approx(0.46666666666666666667, abs=1e-12)
    assert json.loads(neg.to_json())["num_classes"] == 3


def test_ms_star_six_sample_batch():
    z = np.array([[1.0, 0.2], [0.8, 0.5], [-0.3, 1.0], [0.1, 0.9], [0.95, 0.3], [0.2, 1.1]])
    m_neg = np.array([[0.5, 0.4], [0.4, 0.5]])
    table = hsim.MarginTable([0.6, 0.7], m_neg, [0.3, 0.45])
    value, grads = hsim.ms_star_loss(z, [0, 0, 1, 1, 0, 1], [-1, -1, -1, -1, 0, 2], table)
    assert value == pytest.approx(0.40897687786282541903, abs=1e-12)
    assert grads.shape == z.shape
    value_h, _ = hsim.ms_star_loss(z, [0, 0, 1, 1, 0, 1], [-1, -1, -1, -1, 0, 2], table, kind="negexp_poincare")
    assert value_h == pytest.approx(0.45677732373412828829, abs=1e-12)


def test_loss_gradients_match_numpy_differences():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(8, 3))
    labels = [0, 0, 1, 1, 2, 2, 0, 1]
    value, grads = hsim.ms_loss(z, labels)
    h = 1e-6
    for i, k in [(0, 0), (3, 1), (7, 2)]:
        zp, zm = z.copy(), z.copy()
        zp[i, k] += h
        zm[i, k] -= h
        numeric = (hsim.ms_loss(zp, labels)[0] - hsim.ms_loss(zm, labels)[0]) / (2 * h)
        assert numeric == pytest.approx(grads[i, k], rel=1e-4, abs=1e-8)
    assert value >= 0


def test_noise_and_recall():
    labels = list(range(4)) * 5
    noisy, flipped = hsim.inject_label_noise(labels, 4, 0.3, seed=1)
    assert sum(flipped) == 6
    assert all((a != b) == f for a, b, f in zip(labels, noisy, flipped))
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    assert hsim.recall_at_k(x, [0, 0, 1, 1], [1, 3]) == {1: 0.5, 3: 1.0}


def test_generate_and_class_statistics():
    features, labels, train = hsim.generate_hierarchical(2, 2, 10, 8, seed=3)
    assert features.shape == (40, 8)
    assert sum(train) == 20
    s = hsim.class_similarity_matrix(features, labels, 4)
    assert np.allclose(s, s.T)


def test_run_experiment_is_deterministic(tmp_path):
    config = json.dumps({
        "seed": 2,
        "dataset": {"hierarchy": {"superclasses": 2, "subclasses_per_super": 2, "samples_per_class": 10, "dim": 6}},
        "train": {"epochs": 2, "classes_per_batch": 2, "samples_per_class": 3, "hidden_dim": 8, "output_dim": 4},
        "eval": {"k_values": [1, 2]},
    })
    csv_a, recall = hsim.run_experiment(config, str(tmp_path / "a"))
    csv_b, _ = hsim.run_experiment(config)
    assert csv_a == csv_b
    assert csv_a.startswith("run_id,loss,margin_mode,sim_kind,noise_ratio,seed,epoch,mean_loss,recall@1,recall@2\n")
    assert set(recall) == {1, 2}
    assert (tmp_path / "a" / "metrics.csv").read_text() == csv_a
