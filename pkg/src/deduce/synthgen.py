"""Seeded synthetic perception data: per-class isotropic Gaussian scene
features plus Bernoulli object occurrences, with the exact Bayes posterior
available as an accuracy ceiling. Stands in for the large photo datasets at
desk scale."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import (COCO_INDEX, ClassSet, DeduceError, Detection, FrameRecord,
                   HOME7, OFFICE5, detection, softmax_rows)

# Fixed seed for drawing class mean directions; independent of the per-call
# sampling seed so one preset means one geometry.
_MEAN_SEED = 1906
DEFAULT_MEAN_SCALE = 0.06
DEFAULT_SIGMA = 0.024
DEFAULT_CONF_RANGE = (0.55, 0.95)
# Every vocabulary object keeps a small floor probability in every class so
# the Bernoulli likelihoods stay finite and stray landmarks occur.
DEFAULT_BASELINE_PROB = 0.02

# Object occurrence tables. Landmarks lean on their scene; context objects
# (chair, cup, book...) are unmapped in the codebook but still inform the
# combined model and the oracle, which is what lets the concatenated head beat
# the scene-only head the way the full system does.
_HOME7_OBJECT_PROBS = {
    "bathroom": {"toilet": 0.60, "sink": 0.50, "toothbrush": 0.45,
                 "hair drier": 0.30, "bottle": 0.35, "cup": 0.20,
                 "scissors": 0.15},
    "bedroom": {"bed": 0.62, "teddy bear": 0.35, "remote": 0.25,
                "cell phone": 0.30, "book": 0.45, "backpack": 0.20,
                "clock": 0.25},
    "corridor": {"potted plant": 0.50, "clock": 0.30, "person": 0.30,
                 "backpack": 0.15},
    "dining_room": {"dining table": 0.55, "wine glass": 0.30, "bowl": 0.35,
                    "chair": 0.75, "cup": 0.50, "bottle": 0.45, "fork": 0.35,
                    "knife": 0.30, "spoon": 0.30, "cake": 0.15, "banana": 0.15},
    "kitchen": {"oven": 0.45, "microwave": 0.40, "refrigerator": 0.42,
                "sink": 0.25, "bowl": 0.20, "cup": 0.55, "bottle": 0.50,
                "knife": 0.40, "spoon": 0.40, "fork": 0.35, "banana": 0.25,
                "apple": 0.25, "toaster": 0.40},
    "living_room": {"couch": 0.55, "vase": 0.22, "tv": 0.25, "book": 0.50,
                    "remote": 0.45, "potted plant": 0.40, "person": 0.20,
                    "clock": 0.20, "teddy bear": 0.15},
    "office": {"tv": 0.40, "laptop": 0.50, "keyboard": 0.45, "mouse": 0.40,
               "chair": 0.70, "book": 0.45, "cell phone": 0.30, "clock": 0.20,
               "scissors": 0.20, "person": 0.25, "backpack": 0.25,
               "bottle": 0.20},
}

_OFFICE5_OBJECT_PROBS = {
    "conference_room": {"tv": 0.50, "chair": 0.60, "laptop": 0.30},
    "corridor": {"potted plant": 0.15, "clock": 0.10},
    "kitchen": {"oven": 0.40, "microwave": 0.45, "refrigerator": 0.40,
                "sink": 0.30, "cup": 0.30},
    "living_room": {"couch": 0.55, "vase": 0.22, "potted plant": 0.22},
    "office": {"laptop": 0.50, "keyboard": 0.45, "mouse": 0.40, "chair": 0.40},
}


@dataclass
class SceneModel:
    feature_mean: np.ndarray
    feature_sigma: float
    object_probs: dict = field(default_factory=dict)  # object name -> P(present)
    conf_range: tuple = DEFAULT_CONF_RANGE

    def __post_init__(self):
        self.feature_mean = np.asarray(self.feature_mean, dtype=np.float64)
        if not np.all(np.isfinite(self.feature_mean)):
            raise DeduceError("scene model mean must be finite")
        if self.feature_sigma <= 0:
            raise DeduceError("feature_sigma must be > 0")
        for name, p in self.object_probs.items():
            if name not in COCO_INDEX:
                raise DeduceError(f"scene model references unknown object {name!r}")
            if not 0.0 <= p <= 1.0:
                raise DeduceError(f"object probability {p} outside [0,1]")
        lo, hi = self.conf_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise DeduceError(f"conf_range {self.conf_range} invalid")


def _build_preset(class_set, object_tables, feature_dim, mean_scale, sigma,
                  conf_range, baseline_prob, mean_seed):
    rng = np.random.default_rng(mean_seed)
    vocab = sorted({name for table in object_tables.values() for name in table},
                   key=COCO_INDEX.get)
    models = {}
    for name in class_set.names:
        direction = rng.standard_normal(feature_dim)
        direction /= np.linalg.norm(direction)
        probs = {obj: baseline_prob for obj in vocab}
        probs.update(object_tables.get(name, {}))
        models[name] = SceneModel(direction * mean_scale, sigma, probs, tuple(conf_range))
    return models


def home7_preset(feature_dim=512, mean_scale=DEFAULT_MEAN_SCALE, sigma=DEFAULT_SIGMA,
                 conf_range=DEFAULT_CONF_RANGE, baseline_prob=DEFAULT_BASELINE_PROB,
                 mean_seed=_MEAN_SEED):
    """Default seven-class preset: overlapping Gaussian features (accuracy in
    the 70-90% band) with landmark objects tied loosely to their scenes."""
    return _build_preset(HOME7, _HOME7_OBJECT_PROBS, feature_dim, mean_scale,
                         sigma, conf_range, baseline_prob, mean_seed)


def office5_preset(feature_dim=512, mean_scale=DEFAULT_MEAN_SCALE, sigma=DEFAULT_SIGMA,
                   conf_range=DEFAULT_CONF_RANGE, baseline_prob=DEFAULT_BASELINE_PROB,
                   mean_seed=_MEAN_SEED + 1):
    return _build_preset(OFFICE5, _OFFICE5_OBJECT_PROBS, feature_dim, mean_scale,
                         sigma, conf_range, baseline_prob, mean_seed)


PRESETS = {"home7": (home7_preset, HOME7), "office5": (office5_preset, OFFICE5)}


def _sample_bbox(rng):
    x = rng.uniform(0.0, 1.0)
    y = rng.uniform(0.0, 1.0)
    w = rng.uniform(0.0, 1.0 - x)
    h = rng.uniform(0.0, 1.0 - y)
    return (x, y, w, h)


def generate(models, class_set: ClassSet, n_per_class, seed,
             blob_shape=None) -> list:
    """Draw n_per_class frames per scene, deterministic in `seed`.

    models: mapping scene name -> SceneModel covering every class-set name.
    Objects are drawn independently in fixed vocabulary order; a present
    object gets one detection with confidence uniform in conf_range and a
    uniform valid bbox. blob_shape (C, H, W), when given, adds a rank-1
    spatial blob whose pooled vector tracks the class profile (enough for
    attention-model training; no spatial semantics claimed).
    """
    if n_per_class < 1:
        raise DeduceError("n_per_class must be >= 1")
    for name in class_set.names:
        if name not in models:
            raise DeduceError(f"no scene model for class {name!r}")
    rng = np.random.default_rng(seed)
    records = []
    for name in class_set.names:
        model = models[name]
        truth = class_set.label(name)
        dim = model.feature_mean.shape[0]
        vocab = sorted(model.object_probs, key=COCO_INDEX.get)
        lo, hi = model.conf_range
        for i in range(n_per_class):
            feature = model.feature_mean + model.feature_sigma * rng.standard_normal(dim)
            detections = []
            for obj in vocab:
                if rng.random() < model.object_probs[obj]:
                    conf = rng.uniform(lo, hi)
                    detections.append(detection(obj, conf, _sample_bbox(rng)))
            blob = None
            if blob_shape is not None:
                c, bh, bw = blob_shape
                if c > dim:
                    raise DeduceError(f"blob channels {c} exceed feature dim {dim}")
                profile = model.feature_mean[:c] + model.feature_sigma * rng.standard_normal(c)
                spatial = np.outer(rng.uniform(0.5, 1.5, bh), rng.uniform(0.5, 1.5, bw))
                spatial /= spatial.mean()
                blob = profile[:, None, None] * spatial[None, :, :]
            records.append(FrameRecord(f"{name}_{i:05d}", feature,
                                       detections=detections, feature_blob=blob,
                                       truth=truth))
    return records


def _oracle_matrices(models, class_set):
    names = class_set.names
    vocab = sorted({obj for n in names for obj in models[n].object_probs},
                   key=COCO_INDEX.get)
    dim = models[names[0]].feature_mean.shape[0]
    means = np.stack([models[n].feature_mean for n in names])
    sigmas = np.array([models[n].feature_sigma for n in names])
    probs = np.array([[models[n].object_probs.get(obj, 0.0) for obj in vocab]
                      for n in names])
    return vocab, dim, means, sigmas, probs


def oracle_posteriors(models, class_set: ClassSet, frames) -> np.ndarray:
    """Exact per-frame class posteriors under the generative model (equal
    priors): Gaussian feature likelihood x Bernoulli presence likelihood,
    evaluated in log space."""
    vocab, dim, means, sigmas, probs = _oracle_matrices(models, class_set)
    X = np.stack([f.scene_feature for f in frames])
    present = np.zeros((len(frames), len(vocab)))
    vocab_index = {obj: j for j, obj in enumerate(vocab)}
    for i, frame in enumerate(frames):
        for det in frame.detections:
            j = vocab_index.get(det.object.name)
            if j is not None:
                present[i, j] = 1.0
    sq = ((X[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)  # (N, K)
    log_gauss = -sq / (2 * sigmas**2)[None, :] - dim * np.log(sigmas)[None, :]
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
        log1mp = np.log(1.0 - probs)
    log_bern = present @ np.nan_to_num(logp, neginf=-1e300).T \
        + (1.0 - present) @ np.nan_to_num(log1mp, neginf=-1e300).T
    return softmax_rows(log_gauss + log_bern)


def bayes_oracle(models, class_set: ClassSet, frame) -> np.ndarray:
    """Posterior for a single frame; see oracle_posteriors."""
    return oracle_posteriors(models, class_set, [frame])[0]


def save_preset(path, class_set, feature_dim, mean_scale, sigma, conf_range,
                object_probs, baseline_prob=DEFAULT_BASELINE_PROB,
                mean_seed=_MEAN_SEED):
    payload = {
        "type": "synth_preset",
        "class_set": list(class_set.names),
        "feature_dim": int(feature_dim),
        "mean_scale": float(mean_scale),
        "sigma": float(sigma),
        "conf_range": [float(conf_range[0]), float(conf_range[1])],
        "baseline_prob": float(baseline_prob),
        "mean_seed": int(mean_seed),
        "object_probs": {k: dict(v) for k, v in object_probs.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_preset(path):
    """Returns (models, class_set) from a preset file (same JSON idiom as
    codebook configs)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("type") != "synth_preset":
        raise DeduceError(f"{path} is not a synth preset file")
    class_set = ClassSet(payload["class_set"])
    models = _build_preset(
        class_set, payload["object_probs"], payload["feature_dim"],
        payload["mean_scale"], payload["sigma"], tuple(payload["conf_range"]),
        payload.get("baseline_prob", DEFAULT_BASELINE_PROB),
        payload.get("mean_seed", _MEAN_SEED))
    return models, class_set
