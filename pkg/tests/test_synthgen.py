import numpy as np
import pytest

from deduce.codebook import default_codebook
from deduce.core import ClassSet, DeduceError, HOME7, check_posterior, save_manifest
from deduce.fusion import ModelBundle, ModelKind, predict
from deduce.linear import TrainConfig, train
from deduce.synthgen import (SceneModel, bayes_oracle, generate, home7_preset,
                             load_preset, office5_preset, oracle_posteriors,
                             save_preset)

PAIR = ClassSet(["left", "right"])


def _toy_models(dim=4, sigma=0.3, sep=2.0, object_probs=None):
    mean = np.zeros(dim)
    mean[0] = sep / 2
    probs_l, probs_r = (object_probs or ({}, {}))
    return {"left": SceneModel(-mean, sigma, dict(probs_l)),
            "right": SceneModel(mean, sigma, dict(probs_r))}


def test_generate_counts_and_truth():
    records = generate(home7_preset(feature_dim=16), HOME7, 10, seed=0)
    assert len(records) == 70
    for label in HOME7:
        assert sum(1 for r in records if r.truth == label) == 10


def test_generate_is_deterministic_bytewise(tmp_path):
    models = home7_preset(feature_dim=8)
    a = generate(models, HOME7, 20, seed=5)
    b = generate(models, HOME7, 20, seed=5)
    pa, pb = tmp_path / "a.mf", tmp_path / "b.mf"
    save_manifest(pa, a, HOME7)
    save_manifest(pb, b, HOME7)
    assert pa.read_bytes() == pb.read_bytes()
    c = generate(models, HOME7, 20, seed=6)
    assert not all(x == y for x, y in zip(a, c))


def test_generate_validates_inputs():
    with pytest.raises(DeduceError):
        generate(home7_preset(feature_dim=4), HOME7, 0, seed=1)
    with pytest.raises(DeduceError):
        generate({"left": _toy_models()["left"]}, PAIR, 1, seed=1)
    with pytest.raises(DeduceError):
        SceneModel(np.zeros(3), -1.0)
    with pytest.raises(DeduceError):
        SceneModel(np.zeros(3), 1.0, {"bed": 1.5})


def test_zero_noise_features_train_to_perfection():
    models = _toy_models(sigma=1e-9, sep=1.0)
    train_recs = generate(models, PAIR, 50, seed=2)
    test_recs = generate(models, PAIR, 25, seed=3)
    X = np.stack([r.scene_feature for r in train_recs])
    y = np.array([r.truth.id for r in train_recs])
    head, _ = train(X, y, PAIR, TrainConfig(epochs=10, lr_drop_every=5, seed=0))
    X_te = np.stack([r.scene_feature for r in test_recs])
    y_te = np.array([r.truth.id for r in test_recs])
    pred = np.argmax(head.logits_batch(X_te), axis=1)
    assert np.mean(pred == y_te) == 1.0


def test_zero_object_probs_mean_empty_detections_and_corridor():
    models = {name: SceneModel(m.feature_mean, m.feature_sigma,
                               {obj: 0.0 for obj in m.object_probs})
              for name, m in home7_preset(feature_dim=8).items()}
    records = generate(models, HOME7, 5, seed=4)
    assert all(not r.detections for r in records)
    bundle = ModelBundle(codebook=default_codebook())
    for r in records:
        assert predict(r, ModelKind.OBJECT_ONLY, bundle).label.name == "corridor"


def test_oracle_one_hot_at_separated_mean():
    models = _toy_models(sigma=0.05, sep=4.0)
    frame = generate(models, PAIR, 1, seed=9)[0]  # a 'left' draw
    frame.scene_feature = models["left"].feature_mean.copy()
    posterior = bayes_oracle(models, PAIR, frame)
    assert posterior[PAIR.index("left")] > 0.999999


def test_oracle_identical_classes_split_mass():
    m = SceneModel(np.zeros(4), 0.5, {"bed": 0.3})
    models = {"left": m, "right": SceneModel(np.zeros(4), 0.5, {"bed": 0.3})}
    for frame in generate(models, PAIR, 10, seed=11):
        posterior = bayes_oracle(models, PAIR, frame)
        assert np.allclose(posterior, 0.5)


def _oracle_reference(models, class_set, frame):
    """Independent density evaluation with plain loops and math ops."""
    import math
    vocab = sorted({o for m in models.values() for o in m.object_probs})
    present = {d.object.name for d in frame.detections}
    logs = []
    for name in class_set.names:
        m = models[name]
        ll = 0.0
        for j, v in enumerate(frame.scene_feature):
            ll += -((v - m.feature_mean[j]) ** 2) / (2 * m.feature_sigma ** 2)
            ll += -math.log(m.feature_sigma)
        for obj in vocab:
            p = m.object_probs.get(obj, 0.0)
            ll += math.log(p) if obj in present else math.log(1.0 - p)
        logs.append(ll)
    mx = max(logs)
    e = [math.exp(v - mx) for v in logs]
    return np.array(e) / sum(e)


def test_oracle_matches_brute_force_reference():
    models = home7_preset(feature_dim=6)
    records = generate(models, HOME7, 3, seed=13)
    for frame in records:
        fast = bayes_oracle(models, HOME7, frame)
        slow = _oracle_reference(models, HOME7, frame)
        assert np.max(np.abs(fast - slow)) < 1e-10
        check_posterior(fast)


def test_oracle_batch_matches_single():
    models = home7_preset(feature_dim=6)
    records = generate(models, HOME7, 4, seed=14)
    batch = oracle_posteriors(models, HOME7, records)
    for i, frame in enumerate(records):
        assert np.allclose(batch[i], bayes_oracle(models, HOME7, frame))


def test_object_frequencies_within_binomial_bounds():
    probs = ({"bed": 0.35, "tv": 0.08}, {"bed": 0.02, "couch": 0.6})
    models = _toy_models(dim=3, object_probs=probs)
    n = 2000
    records = generate(models, PAIR, n, seed=15)
    for cls, table in zip(("left", "right"), probs):
        class_records = [r for r in records if r.truth.name == cls]
        for obj, p in table.items():
            count = sum(1 for r in class_records
                        if any(d.object.name == obj for d in r.detections))
            bound = 3 * np.sqrt(p * (1 - p) * n)
            assert abs(count - p * n) <= bound, (cls, obj, count, p * n, bound)


def test_confidences_respect_range():
    models = home7_preset(feature_dim=4)
    for r in generate(models, HOME7, 20, seed=16):
        for d in r.detections:
            lo, hi = models[r.truth.name].conf_range
            assert lo <= d.confidence <= hi
            x, y, w, h = d.bbox
            assert 0 <= x and 0 <= y and x + w <= 1.0 + 1e-9 and y + h <= 1.0 + 1e-9


def test_blob_generation_shape_and_pooled_signal():
    models = home7_preset(feature_dim=32)
    records = generate(models, HOME7, 3, seed=17, blob_shape=(8, 5, 6))
    for r in records:
        assert r.feature_blob.shape == (8, 5, 6)
        # rank-1 construction: pooled vector equals the channel profile
        pooled = r.feature_blob.mean(axis=(1, 2))
        outer = pooled[:, None, None] * (r.feature_blob[0] / pooled[0])
        assert np.allclose(outer, r.feature_blob, atol=1e-9)


def test_preset_file_round_trip(tmp_path):
    from deduce.synthgen import (_HOME7_OBJECT_PROBS, DEFAULT_CONF_RANGE,
                                 DEFAULT_MEAN_SCALE, DEFAULT_SIGMA)
    path = tmp_path / "preset.json"
    save_preset(path, HOME7, 16, DEFAULT_MEAN_SCALE, DEFAULT_SIGMA,
                DEFAULT_CONF_RANGE, _HOME7_OBJECT_PROBS)
    models, class_set = load_preset(path)
    reference = home7_preset(feature_dim=16)
    assert class_set == HOME7
    for name in HOME7.names:
        assert np.allclose(models[name].feature_mean, reference[name].feature_mean)
        assert models[name].object_probs == reference[name].object_probs


def test_office5_preset_generates():
    from deduce.core import OFFICE5
    records = generate(office5_preset(feature_dim=8), OFFICE5, 2, seed=18)
    assert len(records) == 10
