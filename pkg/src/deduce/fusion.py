"""The five prediction routes and their dispatcher. The N-best model trusts the
scene head while its top posterior clears a confidence threshold and otherwise
falls back to landmark-object votes (keeping the scene guess when no landmark
is visible)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .codebook import Codebook, classify_objects, vote_weights
from .core import (ClassSet, DeduceError, FrameRecord, MissingAssetError,
                   SceneLabel)
from .attention import classify_attn
from .linear import LinearHead, concat_features, forward

THRESHOLD_PRESETS = {"places": 0.5, "sun": 0.6}


class ModelKind(str, Enum):
    SCENE_ONLY = "scene_only"
    OBJECT_ONLY = "object_only"
    SCENE_ATTENTION = "scene_attention"
    COMBINED = "combined"
    N_BEST = "n_best"


# CLI spellings -> model kinds
MODEL_ALIASES = {
    "scene": ModelKind.SCENE_ONLY,
    "object": ModelKind.OBJECT_ONLY,
    "attention": ModelKind.SCENE_ATTENTION,
    "combined": ModelKind.COMBINED,
    "nbest": ModelKind.N_BEST,
}


@dataclass
class NBestConfig:
    codebook: Codebook
    threshold: float = 0.5
    min_conf: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise DeduceError(f"threshold {self.threshold} outside [0,1]")


@dataclass
class Prediction:
    label: SceneLabel
    posterior: np.ndarray
    source: str        # "scene" | "objects" | "fused"
    model: ModelKind


@dataclass
class ModelBundle:
    """The assets a prediction route may need. Only the fields the chosen
    model uses have to be present."""
    scene_head: LinearHead | None = None
    combined_head: LinearHead | None = None
    attention_head: LinearHead | None = None
    codebook: Codebook | None = None
    nbest: NBestConfig | None = None
    min_conf: float = 0.5

    def require(self, model, asset_name):
        asset = getattr(self, asset_name)
        if asset is None:
            raise MissingAssetError(model.value, asset_name)
        return asset


def predict_n_best(frame: FrameRecord, scene_head: LinearHead, cfg: NBestConfig) -> Prediction:
    """Scene posterior first; below the threshold, landmark votes replace it.
    With no landmark in view the scene guess stands."""
    posterior = forward(scene_head, frame.scene_feature)
    if float(posterior.max()) >= cfg.threshold:
        label = scene_head.class_set[int(np.argmax(posterior))]
        return Prediction(label, posterior, "scene", ModelKind.N_BEST)
    votes = vote_weights(frame.detections, cfg.codebook, cfg.min_conf)
    if votes.sum() > 0.0:
        label, obj_posterior = classify_objects(frame.detections, cfg.codebook, cfg.min_conf)
        return Prediction(label, obj_posterior, "objects", ModelKind.N_BEST)
    label = scene_head.class_set[int(np.argmax(posterior))]
    return Prediction(label, posterior, "scene", ModelKind.N_BEST)


def predict(frame: FrameRecord, model: ModelKind, bundle: ModelBundle) -> Prediction:
    """Route a frame through one of the five models using the bundle's assets."""
    model = ModelKind(model)
    if model is ModelKind.SCENE_ONLY:
        head = bundle.require(model, "scene_head")
        posterior = forward(head, frame.scene_feature)
        label = head.class_set[int(np.argmax(posterior))]
        return Prediction(label, posterior, "scene", model)
    if model is ModelKind.OBJECT_ONLY:
        cb = bundle.require(model, "codebook")
        label, posterior = classify_objects(frame.detections, cb, bundle.min_conf)
        return Prediction(label, posterior, "objects", model)
    if model is ModelKind.SCENE_ATTENTION:
        head = bundle.require(model, "attention_head")
        if frame.feature_blob is None:
            raise MissingAssetError(model.value, f"feature_blob (frame {frame.frame_id!r})")
        label, posterior, _ = classify_attn(frame.feature_blob, head,
                                            out_size=frame.image_size)
        return Prediction(label, posterior, "scene", model)
    if model is ModelKind.COMBINED:
        head = bundle.require(model, "combined_head")
        x = concat_features(frame.scene_feature, frame.detections, bundle.min_conf)
        posterior = forward(head, x)
        label = head.class_set[int(np.argmax(posterior))]
        return Prediction(label, posterior, "fused", model)
    if model is ModelKind.N_BEST:
        cfg = bundle.require(model, "nbest")
        head = bundle.require(model, "scene_head")
        return predict_n_best(frame, head, cfg)
    raise DeduceError(f"unknown model kind {model!r}")


def write_predictions(path, frames, predictions, class_set: ClassSet, extra_header=None):
    """Line-delimited prediction records, one per frame, same header idiom as
    manifests."""
    header = {"type": "header", "class_set": list(class_set.names)}
    if extra_header:
        header.update(extra_header)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for frame, pred in zip(frames, predictions):
            fh.write(json.dumps({
                "type": "prediction",
                "frame_id": frame.frame_id,
                "label": pred.label.name,
                "posterior": [float(v) for v in pred.posterior],
                "source": pred.source,
                "model": pred.model.value,
            }) + "\n")
