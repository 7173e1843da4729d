"""Shared domain types: scene vocabularies, detections, frame records, and the
line-delimited manifest format that decouples feature extraction from everything
downstream."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

EPS_BBOX = 1e-6

# Canonical 80-category detector vocabulary, index order fixed.
COCO_CLASSES = (
    "person", "bicycle", "car", "motorcycle", "airplane", "bus", "train",
    "truck", "boat", "traffic light", "fire hydrant", "stop sign",
    "parking meter", "bench", "bird", "cat", "dog", "horse", "sheep", "cow",
    "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella", "handbag",
    "tie", "suitcase", "frisbee", "skis", "snowboard", "sports ball", "kite",
    "baseball bat", "baseball glove", "skateboard", "surfboard",
    "tennis racket", "bottle", "wine glass", "cup", "fork", "knife", "spoon",
    "bowl", "banana", "apple", "sandwich", "orange", "broccoli", "carrot",
    "hot dog", "pizza", "donut", "cake", "chair", "couch", "potted plant",
    "bed", "dining table", "toilet", "tv", "laptop", "mouse", "remote",
    "keyboard", "cell phone", "microwave", "oven", "toaster", "sink",
    "refrigerator", "book", "clock", "vase", "scissors", "teddy bear",
    "hair drier", "toothbrush",
)

COCO_INDEX = {name: i for i, name in enumerate(COCO_CLASSES)}


class DeduceError(Exception):
    """Base for anticipated data/validation errors (CLI maps these to exit 2)."""


class UnknownSceneError(DeduceError):
    pass


class ManifestError(DeduceError):
    def __init__(self, message, line=None, field=None):
        if line is not None:
            message = f"line {line}: {message}"
        if field is not None:
            message = f"{message} (field: {field})"
        super().__init__(message)
        self.line = line
        self.field = field


class MissingAssetError(DeduceError):
    def __init__(self, model, asset):
        super().__init__(f"model '{model}' requires asset '{asset}' which was not provided")
        self.model = model
        self.asset = asset


@dataclass(frozen=True)
class SceneLabel:
    id: int
    name: str


class ClassSet:
    """Ordered, unique scene-label vocabulary. Index order is significant: all
    weight matrices, posteriors and confusion matrices follow it."""

    def __init__(self, names):
        names = tuple(names)
        if len(names) < 2:
            raise DeduceError("a class set needs at least 2 scene names")
        if len(set(names)) != len(names):
            raise DeduceError(f"duplicate scene names in class set: {names}")
        self.names = names
        self.labels = tuple(SceneLabel(i, n) for i, n in enumerate(names))
        self._index = {n: i for i, n in enumerate(names)}

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.labels)

    def __getitem__(self, idx) -> SceneLabel:
        return self.labels[idx]

    def __contains__(self, name):
        return name in self._index

    def __eq__(self, other):
        return isinstance(other, ClassSet) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"ClassSet({list(self.names)})"

    def index(self, name) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownSceneError(
                f"unknown scene {name!r}; known: {list(self.names)}") from None

    def label(self, name) -> SceneLabel:
        return self.labels[self.index(name)]


HOME7 = ClassSet(["bathroom", "bedroom", "corridor", "dining_room",
                  "kitchen", "living_room", "office"])
OFFICE5 = ClassSet(["conference_room", "corridor", "kitchen",
                    "living_room", "office"])


@dataclass(frozen=True)
class ObjectClass:
    id: int
    name: str


def object_class(name) -> ObjectClass:
    try:
        return ObjectClass(COCO_INDEX[name], name)
    except KeyError:
        raise DeduceError(f"unknown object class {name!r}") from None


@dataclass(frozen=True)
class Detection:
    object: ObjectClass
    confidence: float
    bbox: tuple  # (x, y, w, h), normalized image coordinates

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DeduceError(f"detection confidence {self.confidence} outside [0,1]")
        x, y, w, h = self.bbox
        for v in (x, y, w, h):
            if not 0.0 <= v <= 1.0:
                raise DeduceError(f"bbox coordinate {v} outside [0,1]")
        if x + w > 1.0 + EPS_BBOX or y + h > 1.0 + EPS_BBOX:
            raise DeduceError(f"bbox {self.bbox} extends past the image edge")


def detection(name, confidence, bbox=(0.0, 0.0, 1.0, 1.0)) -> Detection:
    return Detection(object_class(name), float(confidence), tuple(float(v) for v in bbox))


@dataclass
class FrameRecord:
    """One perception sample: pooled scene feature, optional spatial feature
    blob, detection list, optional ground truth and pose."""

    frame_id: str
    scene_feature: np.ndarray
    detections: list = field(default_factory=list)
    feature_blob: np.ndarray | None = None
    truth: SceneLabel | None = None
    pose: tuple | None = None  # (x meters, y meters, t seconds)
    image_size: tuple = (224, 224)

    def __post_init__(self):
        self.scene_feature = np.asarray(self.scene_feature, dtype=np.float64)
        if self.scene_feature.ndim != 1:
            raise DeduceError(f"frame {self.frame_id}: scene_feature must be 1-D")
        if not np.all(np.isfinite(self.scene_feature)):
            raise DeduceError(f"frame {self.frame_id}: non-finite scene_feature")
        if self.feature_blob is not None:
            self.feature_blob = np.asarray(self.feature_blob, dtype=np.float64)
            if self.feature_blob.ndim != 3:
                raise DeduceError(f"frame {self.frame_id}: feature_blob must be (C,H,W)")
            if not np.all(np.isfinite(self.feature_blob)):
                raise DeduceError(f"frame {self.frame_id}: non-finite feature_blob")
        if self.pose is not None:
            self.pose = tuple(float(v) for v in self.pose)

    def __eq__(self, other):
        if not isinstance(other, FrameRecord):
            return NotImplemented
        blobs_equal = (self.feature_blob is None) == (other.feature_blob is None) and (
            self.feature_blob is None or np.array_equal(self.feature_blob, other.feature_blob))
        return (self.frame_id == other.frame_id
                and np.array_equal(self.scene_feature, other.scene_feature)
                and blobs_equal
                and self.detections == other.detections
                and self.truth == other.truth
                and self.pose == other.pose
                and tuple(self.image_size) == tuple(other.image_size))


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax; valid for logit magnitudes up to ~1e4."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise DeduceError("softmax requires finite logits")
    shifted = logits - np.max(logits)
    e = np.exp(shifted)
    return e / e.sum()


def softmax_rows(logits) -> np.ndarray:
    """Row-wise stable softmax for (N, K) logit batches."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def check_posterior(values, atol=1e-9):
    """Raise unless `values` is a probability vector (entries in [0,1], sum 1)."""
    values = np.asarray(values)
    if values.ndim != 1 or np.any(values < -atol) or np.any(values > 1 + atol):
        raise DeduceError("posterior entries must lie in [0,1]")
    if abs(values.sum() - 1.0) > atol:
        raise DeduceError(f"posterior sums to {values.sum()!r}, expected 1")


@dataclass
class ManifestHeader:
    class_set: ClassSet
    feature_dim: int
    blob_shape: tuple | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class Manifest:
    header: ManifestHeader
    records: list

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    @property
    def class_set(self):
        return self.header.class_set


def _require(obj, key, line, kind=None):
    if key not in obj:
        raise ManifestError(f"missing required key {key!r}", line=line, field=key)
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ManifestError(f"key {key!r} has wrong type {type(value).__name__}",
                            line=line, field=key)
    return value


def load_manifest(path, class_set: ClassSet | None = None) -> Manifest:
    """Parse and validate a line-delimited manifest.

    The first record must be the header. When `class_set` is given it must
    match the header's vocabulary; truth labels are resolved against it.
    Errors carry the 1-based line number and offending field.
    """
    header = None
    records = []
    last_t = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", line=lineno) from None
            kind = _require(obj, "type", lineno, str)
            if kind == "header":
                if header is not None:
                    raise ManifestError("duplicate header record", line=lineno)
                names = _require(obj, "class_set", lineno, list)
                header_set = ClassSet(names)
                if class_set is not None and header_set != class_set:
                    raise ManifestError(
                        f"header class set {list(header_set.names)} does not match "
                        f"requested {list(class_set.names)}", line=lineno, field="class_set")
                feature_dim = _require(obj, "feature_dim", lineno, int)
                blob_shape = obj.get("blob_shape")
                if blob_shape is not None:
                    blob_shape = tuple(int(v) for v in blob_shape)
                extra = {k: v for k, v in obj.items()
                         if k not in ("type", "class_set", "feature_dim", "blob_shape")}
                header = ManifestHeader(header_set, feature_dim, blob_shape, extra)
                continue
            if kind != "frame":
                raise ManifestError(f"unknown record type {kind!r}", line=lineno, field="type")
            if header is None:
                raise ManifestError("frame record before header", line=lineno)
            records.append(_parse_frame(obj, header, lineno))
            pose = records[-1].pose
            if pose is not None:
                if last_t is not None and pose[2] < last_t:
                    raise ManifestError(
                        f"frame {records[-1].frame_id!r}: pose time {pose[2]} decreases "
                        f"(previous {last_t})", line=lineno, field="pose")
                last_t = pose[2]
    if header is None:
        raise ManifestError(f"{path}: no header record found")
    return Manifest(header, records)


def _parse_frame(obj, header, lineno) -> FrameRecord:
    frame_id = _require(obj, "frame_id", lineno, str)
    feat = _require(obj, "scene_feature", lineno, list)
    if len(feat) != header.feature_dim:
        raise ManifestError(
            f"frame {frame_id!r}: scene_feature has {len(feat)} entries, "
            f"expected {header.feature_dim}", line=lineno, field="scene_feature")
    if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in feat):
        raise ManifestError(f"frame {frame_id!r}: non-finite scene_feature entry",
                            line=lineno, field="scene_feature")
    blob = obj.get("feature_blob")
    if blob is not None:
        blob = np.asarray(blob, dtype=np.float64)
        if header.blob_shape is None:
            raise ManifestError(
                f"frame {frame_id!r}: feature_blob present but header declares none",
                line=lineno, field="feature_blob")
        if blob.shape != header.blob_shape:
            raise ManifestError(
                f"frame {frame_id!r}: feature_blob shape {blob.shape} != "
                f"declared {header.blob_shape}", line=lineno, field="feature_blob")
    detections = []
    for d in obj.get("detections", []):
        name = _require(d, "name", lineno, str)
        if name not in COCO_INDEX:
            raise ManifestError(f"frame {frame_id!r}: unknown object {name!r}",
                                line=lineno, field="detections")
        try:
            detections.append(detection(name, d["confidence"], d["bbox"]))
        except (DeduceError, KeyError) as exc:
            raise ManifestError(f"frame {frame_id!r}: bad detection: {exc}",
                                line=lineno, field="detections") from None
    truth_name = obj.get("truth")
    truth = None
    if truth_name is not None:
        try:
            truth = header.class_set.label(truth_name)
        except UnknownSceneError as exc:
            raise ManifestError(f"frame {frame_id!r}: {exc}",
                                line=lineno, field="truth") from None
    pose = obj.get("pose")
    if pose is not None:
        pose = tuple(float(v) for v in pose)
        if len(pose) != 3:
            raise ManifestError(f"frame {frame_id!r}: pose must be [x, y, t]",
                                line=lineno, field="pose")
    image_size = tuple(obj.get("image_size", (224, 224)))
    try:
        return FrameRecord(frame_id, np.asarray(feat, dtype=np.float64),
                           detections=detections, feature_blob=blob, truth=truth,
                           pose=pose, image_size=image_size)
    except DeduceError as exc:
        raise ManifestError(str(exc), line=lineno) from None


def frame_to_dict(rec: FrameRecord) -> dict:
    return {
        "type": "frame",
        "frame_id": rec.frame_id,
        "scene_feature": [float(v) for v in rec.scene_feature],
        "feature_blob": None if rec.feature_blob is None else rec.feature_blob.tolist(),
        "detections": [
            {"name": d.object.name, "confidence": d.confidence, "bbox": list(d.bbox)}
            for d in rec.detections
        ],
        "truth": None if rec.truth is None else rec.truth.name,
        "pose": None if rec.pose is None else list(rec.pose),
        "image_size": list(rec.image_size),
    }


def save_manifest(path, records, class_set: ClassSet, feature_dim=None,
                  blob_shape=None, extra_header=None):
    """Serialize records as header + frame lines. Floats keep full round-trip
    precision (json uses repr)."""
    records = list(records)
    if feature_dim is None:
        if not records:
            raise DeduceError("cannot infer feature_dim from an empty record list")
        feature_dim = int(records[0].scene_feature.shape[0])
    if blob_shape is None:
        for rec in records:
            if rec.feature_blob is not None:
                blob_shape = rec.feature_blob.shape
                break
    header = {"type": "header", "class_set": list(class_set.names),
              "feature_dim": int(feature_dim),
              "blob_shape": None if blob_shape is None else [int(v) for v in blob_shape]}
    if extra_header:
        header.update(extra_header)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in records:
            fh.write(json.dumps(frame_to_dict(rec)) + "\n")
