import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deduce.core import (COCO_CLASSES, ClassSet, DeduceError, FrameRecord,
                         HOME7, OFFICE5, ManifestError, check_posterior,
                         detection, load_manifest, save_manifest, softmax)


def test_builtin_class_sets():
    assert HOME7.names == ("bathroom", "bedroom", "corridor", "dining_room",
                           "kitchen", "living_room", "office")
    assert OFFICE5.names == ("conference_room", "corridor", "kitchen",
                             "living_room", "office")
    assert len(COCO_CLASSES) == 80
    assert len(set(COCO_CLASSES)) == 80


def test_class_set_rejects_bad_vocabularies():
    with pytest.raises(DeduceError):
        ClassSet(["solo"])
    with pytest.raises(DeduceError):
        ClassSet(["a", "b", "a"])


def test_scene_label_lookup():
    lab = HOME7.label("kitchen")
    assert (lab.id, lab.name) == (4, "kitchen")
    with pytest.raises(DeduceError):
        HOME7.label("ballroom")


def test_detection_validation():
    d = detection("bed", 0.9, (0.1, 0.1, 0.5, 0.5))
    assert d.object.name == "bed" and d.object.id == 59
    with pytest.raises(DeduceError):
        detection("bed", 1.5)
    with pytest.raises(DeduceError):
        detection("bed", 0.5, (0.8, 0.1, 0.5, 0.1))  # runs past the right edge
    with pytest.raises(DeduceError):
        detection("unicorn", 0.5)


def test_softmax_uniform_on_zeros():
    p = softmax(np.zeros(7))
    assert np.allclose(p, 1 / 7)
    check_posterior(p)


def test_softmax_hand_value():
    p = softmax([math.log(2.0), 0.0])
    assert np.allclose(p, [2 / 3, 1 / 3], atol=1e-12)


def test_softmax_large_logits_stable():
    p = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(p))
    assert p[0] > 1 - 1e-12 and p[1] < 1e-12
    check_posterior(p)
    check_posterior(softmax([1e4, -1e4, 0.0]))


def test_softmax_rejects_non_finite():
    with pytest.raises(DeduceError):
        softmax([np.inf, 0.0])
    with pytest.raises(DeduceError):
        softmax([np.nan, 0.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-1e4, max_value=1e4, allow_nan=False),
                min_size=1, max_size=12))
def test_softmax_always_a_posterior(logits):
    check_posterior(softmax(logits))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=-50, max_value=50), min_size=2, max_size=9),
       st.floats(min_value=-100, max_value=100))
def test_softmax_shift_invariance(logits, shift):
    a = softmax(logits)
    b = softmax(np.asarray(logits) + shift)
    assert np.all(np.abs(a - b) < 1e-12)


def _records(n=3, dim=8, with_pose=False, with_blob=False):
    rng = np.random.default_rng(0)
    recs = []
    for i in range(n):
        blob = rng.standard_normal((4, 3, 3)) if with_blob else None
        recs.append(FrameRecord(
            f"frame_{i}",
            rng.standard_normal(dim),
            detections=[detection("bed", 0.9, (0.1, 0.2, 0.3, 0.4)),
                        detection("tv", 0.6, (0.0, 0.0, 0.2, 0.2))],
            feature_blob=blob,
            truth=HOME7[i % len(HOME7)],
            pose=(float(i), float(i) * 0.5, float(i)) if with_pose else None,
        ))
    return recs


def test_manifest_round_trip(tmp_path):
    recs = _records(4, with_pose=True, with_blob=True)
    path = tmp_path / "roundtrip.mf"
    save_manifest(path, recs, HOME7)
    loaded = load_manifest(path, HOME7)
    assert loaded.header.feature_dim == 8
    assert loaded.header.blob_shape == (4, 3, 3)
    assert list(loaded) == recs


def test_manifest_preserves_order(tmp_path):
    recs = _records(3)
    path = tmp_path / "three.mf"
    save_manifest(path, recs, HOME7)
    loaded = load_manifest(path)
    assert [r.frame_id for r in loaded] == ["frame_0", "frame_1", "frame_2"]


def test_manifest_double_round_trip_is_stable(tmp_path):
    recs = _records(5, with_pose=True)
    p1, p2 = tmp_path / "a.mf", tmp_path / "b.mf"
    save_manifest(p1, recs, HOME7)
    save_manifest(p2, list(load_manifest(p1)), HOME7)
    assert p1.read_bytes() == p2.read_bytes()


def test_manifest_unknown_truth_scene(tmp_path):
    path = tmp_path / "bad.mf"
    with open(path, "w") as fh:
        fh.write(json.dumps({"type": "header", "class_set": list(HOME7.names),
                             "feature_dim": 2, "blob_shape": None}) + "\n")
        fh.write(json.dumps({"type": "frame", "frame_id": "f0",
                             "scene_feature": [0.0, 1.0], "detections": [],
                             "truth": "ballroom"}) + "\n")
    with pytest.raises(ManifestError) as err:
        load_manifest(path, HOME7)
    assert "ballroom" in str(err.value)
    assert err.value.line == 2


def test_manifest_feature_dim_mismatch_names_frame(tmp_path):
    path = tmp_path / "dim.mf"
    with open(path, "w") as fh:
        fh.write(json.dumps({"type": "header", "class_set": list(HOME7.names),
                             "feature_dim": 512, "blob_shape": None}) + "\n")
        fh.write(json.dumps({"type": "frame", "frame_id": "offender",
                             "scene_feature": [0.0] * 511,
                             "detections": [], "truth": None}) + "\n")
    with pytest.raises(ManifestError) as err:
        load_manifest(path)
    msg = str(err.value)
    assert "offender" in msg and "511" in msg and "512" in msg


def test_manifest_rejects_decreasing_pose_time(tmp_path):
    recs = _records(3, with_pose=True)
    recs[2].pose = (2.0, 1.0, 0.5)  # earlier than frame_1's t=1.0
    path = tmp_path / "time.mf"
    save_manifest(path, recs, HOME7)
    with pytest.raises(ManifestError) as err:
        load_manifest(path)
    assert "frame_2" in str(err.value)


def test_manifest_rejects_class_set_mismatch(tmp_path):
    path = tmp_path / "mismatch.mf"
    save_manifest(path, _records(2), HOME7)
    with pytest.raises(ManifestError):
        load_manifest(path, OFFICE5)


def test_manifest_missing_header(tmp_path):
    path = tmp_path / "noheader.mf"
    with open(path, "w") as fh:
        fh.write(json.dumps({"type": "frame", "frame_id": "f",
                             "scene_feature": [0.0]}) + "\n")
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_frame_record_rejects_non_finite():
    with pytest.raises(DeduceError):
        FrameRecord("bad", np.array([np.nan, 1.0]))
