import dataclasses
import math

import numpy as np
import pytest

from deduce.core import COCO_INDEX, ClassSet, DeduceError, HOME7, softmax
from deduce.linear import (LinearHead, TrainConfig, TrainingError,
                           analytic_gradient, combined_schedule, concat_features,
                           cross_entropy, forward, init_head, load_head,
                           save_head, scene_schedule, train, _momentum_step)
from deduce.core import detection

AB = ClassSet(["alpha", "beta"])


def test_cross_entropy_uniform_is_log_k():
    p = np.full((1, 7), 1 / 7)
    assert abs(cross_entropy(p, [3]) - math.log(7)) < 1e-12


def test_cross_entropy_perfect_prediction_is_zero():
    p = np.zeros((3, 4))
    truth = [0, 2, 3]
    for i, t in enumerate(truth):
        p[i, t] = 1.0
    assert cross_entropy(p, truth) <= 1e-10


def test_cross_entropy_hand_value():
    assert abs(cross_entropy(np.array([[0.5, 0.25, 0.25]]), [1]) - math.log(4)) < 1e-12


def test_cross_entropy_rejects_empty_batch():
    with pytest.raises(DeduceError):
        cross_entropy(np.zeros((0, 3)), [])


def test_cross_entropy_nonnegative_random():
    rng = np.random.default_rng(0)
    for _ in range(100):
        k = int(rng.integers(2, 9))
        n = int(rng.integers(1, 6))
        logits = rng.standard_normal((n, k)) * 5
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        truth = rng.integers(0, k, size=n)
        assert cross_entropy(p, truth) >= 0.0


def test_forward_zero_head_uniform():
    head = LinearHead(np.zeros((7, 5)), np.zeros(7), HOME7)
    assert np.allclose(forward(head, np.ones(5)), 1 / 7)


def test_forward_concentrates_on_matching_class():
    w = np.eye(2) * 50.0
    head = LinearHead(w, np.zeros(2), AB)
    p = forward(head, np.array([1.0, 0.0]))
    assert p[0] > 0.999999


def test_forward_matches_manual_oracle():
    rng = np.random.default_rng(1)
    for _ in range(30):
        k, d = int(rng.integers(2, 8)), int(rng.integers(1, 10))
        head = LinearHead(rng.standard_normal((k, d)), rng.standard_normal(k),
                          ClassSet([f"c{i}" for i in range(k)]))
        x = rng.standard_normal(d)
        # independent oracle: explicit loops + softmax formula
        logits = [sum(head.weights[i, j] * x[j] for j in range(d)) + head.bias[i]
                  for i in range(k)]
        m = max(logits)
        exps = [math.exp(v - m) for v in logits]
        oracle = np.array(exps) / sum(exps)
        assert np.all(np.abs(forward(head, x) - oracle) < 1e-12)


def test_forward_dim_mismatch():
    head = LinearHead(np.zeros((2, 3)), np.zeros(2), AB)
    with pytest.raises(DeduceError):
        forward(head, np.zeros(4))


def _numeric_gradient(head, X, y, h=1e-5):
    def loss(weights, bias):
        probe = LinearHead(weights, bias, head.class_set)
        logits = X @ probe.weights.T + probe.bias
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        p = e / e.sum(axis=1, keepdims=True)
        return cross_entropy(p, y)

    gw = np.zeros_like(head.weights)
    for i in range(head.weights.shape[0]):
        for j in range(head.weights.shape[1]):
            wp, wm = head.weights.copy(), head.weights.copy()
            wp[i, j] += h
            wm[i, j] -= h
            gw[i, j] = (loss(wp, head.bias) - loss(wm, head.bias)) / (2 * h)
    gb = np.zeros_like(head.bias)
    for i in range(head.bias.shape[0]):
        bp, bm = head.bias.copy(), head.bias.copy()
        bp[i] += h
        bm[i] -= h
        gb[i] = (loss(head.weights, bp) - loss(head.weights, bm)) / (2 * h)
    return gw, gb


def test_gradient_zero_at_perfect_prediction():
    head = LinearHead(np.array([[40.0, -40.0], [-40.0, 40.0]]), np.zeros(2), AB)
    X = np.array([[1.0, 0.0], [0.0, 1.0]])
    gw, gb = analytic_gradient(head, X, [0, 1])
    assert np.max(np.abs(gw)) < 1e-10
    assert np.max(np.abs(gb)) < 1e-10


def test_gradient_hand_case_uniform_point():
    # zero weights, 2 classes, single sample: rows are +-0.5 x
    head = LinearHead(np.zeros((2, 3)), np.zeros(2), AB)
    x = np.array([0.5, -1.5, 2.0])
    gw, gb = analytic_gradient(head, x[None, :], [0])
    assert np.allclose(gw[0], -0.5 * x)
    assert np.allclose(gw[1], 0.5 * x)
    assert np.allclose(gb, [-0.5, 0.5])


def test_gradient_matches_finite_differences_100_instances():
    rng = np.random.default_rng(42)
    for _ in range(100):
        k = int(rng.integers(2, 6))
        d = int(rng.integers(1, 8))
        n = int(rng.integers(1, 7))
        head = LinearHead(rng.standard_normal((k, d)), rng.standard_normal(k),
                          ClassSet([f"c{i}" for i in range(k)]))
        X = rng.standard_normal((n, d))
        y = rng.integers(0, k, size=n)
        gw, gb = analytic_gradient(head, X, y)
        nw, nb = _numeric_gradient(head, X, y)
        scale = max(np.max(np.abs(nw)), np.max(np.abs(nb)), 1.0)
        assert np.max(np.abs(gw - nw)) / scale < 1e-6
        assert np.max(np.abs(gb - nb)) / scale < 1e-6


def _separable_two_class(n=200, dim=16, seed=0):
    """Margin >= 1 along a fixed direction, arbitrary orthogonal noise."""
    rng = np.random.default_rng(seed)
    direction = np.zeros(dim)
    direction[0] = 1.0
    X, y = [], []
    for i in range(n):
        cls = i % 2
        offset = (1.0 + rng.uniform(0, 1)) * (1 if cls == 0 else -1)
        point = rng.standard_normal(dim)
        point[0] = offset
        X.append(point)
        y.append(cls)
    return np.array(X), np.array(y)


def test_separable_data_is_separable():
    # sanity oracle: a fixed linear rule classifies the set perfectly
    X, y = _separable_two_class()
    rule = np.where(X[:, 0] > 0, 0, 1)
    assert np.array_equal(rule, y)


def test_trainer_reaches_perfect_accuracy_within_20_epochs():
    X, y = _separable_two_class()
    cfg = TrainConfig(epochs=20, lr_drop_every=30, seed=1)
    head, report = train(X, y, AB, cfg)
    assert any(e.train_acc == 1.0 for e in report.epochs)
    assert report.epochs_to_reach(1.0, on="train_acc") <= 20


def test_trainer_zero_lr_is_identity():
    X, y = _separable_two_class(n=40)
    cfg = TrainConfig(epochs=1, lr0=0.0, lr_drop_every=30, seed=5)
    head, report = train(X, y, AB, cfg)
    reference = init_head(AB, X.shape[1], np.random.default_rng(5))
    assert np.array_equal(head.weights, reference.weights)
    assert np.array_equal(head.bias, reference.bias)
    # the recorded loss equals the loss of the untouched initialization
    logits = X @ reference.weights.T + reference.bias
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    expected = cross_entropy(e / e.sum(axis=1, keepdims=True), y)
    assert abs(report.epochs[0].train_loss - expected) < 1e-12


def test_short_schedule_lr_sequence():
    cfg = combined_schedule(seed=0)
    assert cfg.epochs == 9 and cfg.lr_drop_every == 3
    lrs = [cfg.lr_at(e) for e in range(9)]
    assert np.allclose(lrs, [0.1] * 3 + [0.01] * 3 + [0.001] * 3)
    X, y = _separable_two_class(n=60)
    _, report = train(X, y, AB, cfg)
    assert np.allclose([e.lr for e in report.epochs],
                       [0.1] * 3 + [0.01] * 3 + [0.001] * 3)


def test_long_schedule_defaults():
    cfg = scene_schedule()
    assert cfg.epochs == 90 and cfg.lr_drop_every == 30
    assert (cfg.lr0, cfg.momentum, cfg.weight_decay) == (0.1, 0.9, 1e-4)
    assert cfg.lr_at(0) == 0.1 and cfg.lr_at(30) == 0.01 and cfg.lr_at(89) == 0.001


def test_trainer_is_deterministic():
    X, y = _separable_two_class(n=120, seed=3)
    cfg = TrainConfig(epochs=7, lr_drop_every=3, seed=11)
    head_a, report_a = train(X, y, AB, cfg)
    head_b, report_b = train(X, y, AB, cfg)
    assert np.array_equal(head_a.weights, head_b.weights)
    assert np.array_equal(head_a.bias, head_b.bias)
    assert report_a == report_b  # bit-identical epoch stats


def test_trainer_rejects_empty_class():
    X = np.ones((4, 3))
    y = np.zeros(4, dtype=int)
    with pytest.raises(TrainingError):
        train(X, y, AB, TrainConfig(epochs=1, lr_drop_every=1))


def test_weight_decay_shrinks_weights_without_data_gradient():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((3, 4))
    v = np.zeros_like(w)
    wd, lr = 0.1, 0.05
    for _ in range(10):
        before = np.linalg.norm(w)
        _momentum_step(w, v, wd * w, lr, momentum=0.0)
        assert np.linalg.norm(w) < before


def test_init_loss_near_log_k_on_balanced_data(default_run):
    X = np.stack([r.scene_feature for r in default_run["train"]])
    y = np.array([r.truth.id for r in default_run["train"]])
    cfg = TrainConfig(epochs=1, lr0=0.0, lr_drop_every=1, seed=7)
    _, report = train(X, y, HOME7, cfg)
    assert abs(report.epochs[0].train_loss - math.log(7)) < 0.05


def test_concat_features_empty():
    feat = np.arange(4.0)
    out = concat_features(feat, [])
    assert out.shape == (84,)
    assert np.array_equal(out[:4], feat)
    assert np.all(out[4:] == 0)


def test_concat_features_idempotent_one_hot():
    out = concat_features(np.zeros(2), [detection("bed", 0.9), detection("bed", 0.8)])
    assert out[2:].sum() == 1.0
    assert out[2 + COCO_INDEX["bed"]] == 1.0


def test_concat_features_indices():
    out = concat_features(np.zeros(3), [detection("tv", 0.9), detection("laptop", 0.7)])
    hot = np.where(out[3:] == 1.0)[0]
    assert set(hot) == {COCO_INDEX["tv"], COCO_INDEX["laptop"]}


def test_concat_features_respects_min_conf():
    out = concat_features(np.zeros(1), [detection("tv", 0.4)], min_conf=0.5)
    assert np.all(out[1:] == 0)


def test_head_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    head = LinearHead(rng.standard_normal((7, 12)), rng.standard_normal(7), HOME7)
    path = tmp_path / "head.json"
    save_head(head, path, seed=7, config_hash="abc123")
    loaded = load_head(path)
    assert np.array_equal(loaded.weights, head.weights)
    assert np.array_equal(loaded.bias, head.bias)
    assert loaded.class_set == HOME7


def test_train_config_validation():
    with pytest.raises(DeduceError):
        TrainConfig(epochs=0, lr_drop_every=1)
    with pytest.raises(DeduceError):
        TrainConfig(epochs=1, lr_drop_every=1, momentum=1.0)
    with pytest.raises(DeduceError):
        TrainConfig(epochs=1, lr_drop_every=1, weight_decay=-0.1)
