"""Object-only place classification: a landmark codebook maps detector classes
to the single scene they indicate; absence of every landmark signals the
corridor class."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .core import COCO_INDEX, ClassSet, DeduceError, HOME7, OFFICE5, SceneLabel

DEFAULT_MIN_CONF = 0.5

# Landmark table for the seven home classes. Each object indicates exactly one
# scene; "person" deliberately absent.
_HOME7_ENTRIES = {
    "toilet": "bathroom",
    "sink": "bathroom",
    "bed": "bedroom",
    "dining table": "dining_room",
    "wine glass": "dining_room",
    "bowl": "dining_room",
    "oven": "kitchen",
    "microwave": "kitchen",
    "refrigerator": "kitchen",
    "couch": "living_room",
    "vase": "living_room",
    "tv": "office",
    "laptop": "office",
    "keyboard": "office",
    "mouse": "office",
}

_OFFICE5_ENTRIES = {
    "tv": "conference_room",
    "chair": "conference_room",
    "oven": "kitchen",
    "microwave": "kitchen",
    "refrigerator": "kitchen",
    "sink": "kitchen",
    "couch": "living_room",
    "vase": "living_room",
    "laptop": "office",
    "keyboard": "office",
    "mouse": "office",
}


@dataclass(frozen=True)
class Codebook:
    class_set: ClassSet
    entries: dict = field(default_factory=dict)  # object name -> scene name
    absence_label: str = "corridor"

    def __post_init__(self):
        for obj, scene in self.entries.items():
            if obj not in COCO_INDEX:
                raise DeduceError(f"codebook object {obj!r} is not a known detector class")
            if scene not in self.class_set:
                raise DeduceError(
                    f"codebook maps {obj!r} to {scene!r}, absent from {self.class_set}")
        if self.absence_label not in self.class_set:
            raise DeduceError(f"absence label {self.absence_label!r} absent from class set")
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))

    def lookup(self, object_name) -> str | None:
        return self.entries.get(object_name)


def default_codebook(class_set: ClassSet = HOME7) -> Codebook:
    """The built-in home landmark table (15 object->scene pairs, corridor on
    absence)."""
    return Codebook(class_set, dict(_HOME7_ENTRIES), "corridor")


def office5_codebook(class_set: ClassSet = OFFICE5) -> Codebook:
    return Codebook(class_set, dict(_OFFICE5_ENTRIES), "corridor")


def vote_weights(detections, cb: Codebook, min_conf=DEFAULT_MIN_CONF) -> np.ndarray:
    """Confidence-weighted landmark votes per scene class. Detections below
    min_conf or without a codebook entry contribute nothing."""
    votes = np.zeros(len(cb.class_set), dtype=np.float64)
    for det in detections:
        if det.confidence < min_conf:
            continue
        scene = cb.lookup(det.object.name)
        if scene is None:
            continue
        votes[cb.class_set.index(scene)] += det.confidence
    return votes


def classify_objects(detections, cb: Codebook, min_conf=DEFAULT_MIN_CONF):
    """Scene vote from detected landmarks.

    Returns (label, posterior). The posterior is the normalized vote mass
    (zero for scenes without votes); when no landmark survives the confidence
    cut the absence label wins with a one-hot posterior. Vote ties break
    toward the lower class id.
    """
    if not 0.0 <= min_conf <= 1.0:
        raise DeduceError(f"min_conf {min_conf} outside [0,1]")
    votes = vote_weights(detections, cb, min_conf)
    total = votes.sum()
    if total == 0.0:
        idx = cb.class_set.index(cb.absence_label)
        posterior = np.zeros(len(cb.class_set))
        posterior[idx] = 1.0
        return cb.class_set[idx], posterior
    posterior = votes / total
    idx = int(np.argmax(votes))
    return cb.class_set[idx], posterior


def save_codebook(cb: Codebook, path):
    payload = {"entries": dict(cb.entries), "absence": cb.absence_label}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _reject_duplicate_keys(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise DeduceError(f"codebook maps object {key!r} more than once")
        seen[key] = value
    return seen


def load_codebook(path, class_set: ClassSet) -> Codebook:
    """Read a codebook config, rejecting duplicate object keys and names
    outside the class set."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh, object_pairs_hook=_reject_duplicate_keys)
        except json.JSONDecodeError as exc:
            raise DeduceError(f"{path}: invalid codebook file: {exc.msg}") from None
    if "entries" not in payload:
        raise DeduceError(f"{path}: codebook file lacks an 'entries' map")
    absence = payload.get("absence", "corridor")
    return Codebook(class_set, dict(payload["entries"]), absence)
