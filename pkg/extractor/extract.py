#!/usr/bin/env python3
"""Offline manifest extractor: run backbone networks over an image folder or a
video and emit line-delimited perception manifests (scene feature vector,
optional spatial blob, optional detections per frame) for the categorization
engine.

The engine is consumed purely through the manifest file format; nothing here
imports it. Scene features and blobs come from a ResNet-18 trunk (weights from
--scene-weights, or seeded random "stub" weights when absent); detections come
from a pluggable backend: `none` (empty lists) or `torchvision` (Faster R-CNN,
random-init unless --detector-weights is given).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

EXTRACTOR_VERSION = "0.1.0"

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".webp"}
VIDEO_SUFFIXES = {".mp4", ".avi", ".mkv", ".mov"}

# Canonical 80-class detector vocabulary; manifest detections must not leave it.
COCO80 = (
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

# 91-slot detection-head vocabulary used by the torchvision COCO models;
# "N/A" slots and classes outside COCO80 are dropped on output.
COCO91 = (
    "__background__", "person", "bicycle", "car", "motorcycle", "airplane",
    "bus", "train", "truck", "boat", "traffic light", "fire hydrant", "N/A",
    "stop sign", "parking meter", "bench", "bird", "cat", "dog", "horse",
    "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "N/A", "backpack",
    "umbrella", "N/A", "N/A", "handbag", "tie", "suitcase", "frisbee", "skis",
    "snowboard", "sports ball", "kite", "baseball bat", "baseball glove",
    "skateboard", "surfboard", "tennis racket", "bottle", "N/A", "wine glass",
    "cup", "fork", "knife", "spoon", "bowl", "banana", "apple", "sandwich",
    "orange", "broccoli", "carrot", "hot dog", "pizza", "donut", "cake",
    "chair", "couch", "potted plant", "bed", "N/A", "dining table", "N/A",
    "N/A", "toilet", "N/A", "tv", "laptop", "mouse", "remote", "keyboard",
    "cell phone", "microwave", "oven", "toaster", "sink", "refrigerator",
    "N/A", "book", "clock", "vase", "scissors", "teddy bear", "hair drier",
    "toothbrush",
)

HOME7 = ("bathroom", "bedroom", "corridor", "dining_room", "kitchen",
         "living_room", "office")

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class ExtractError(Exception):
    pass


@dataclass
class ExtractionJob:
    input_path: str
    out_path: str
    stride: int = 1
    fields: tuple = ("features", "blobs", "detections")
    device: str = "cpu"
    scene_weights: str | None = None
    detector: str = "none"  # none | torchvision
    detector_weights: str | None = None
    det_conf: float = 0.5
    class_set: tuple = HOME7
    image_size: int = 224
    seed: int = 0

    def __post_init__(self):
        if self.stride < 1:
            raise ExtractError("stride must be >= 1")
        self.fields = tuple(self.fields)
        unknown = set(self.fields) - {"features", "blobs", "detections"}
        if unknown:
            raise ExtractError(f"unknown fields: {sorted(unknown)}")
        if not self.fields:
            raise ExtractError("select at least one of features/blobs/detections")
        if self.detector not in ("none", "torchvision"):
            raise ExtractError(f"unknown detector backend {self.detector!r}")


class SceneTrunk:
    """ResNet-18 trunk exposing both the (512, 7, 7) spatial blob from the last
    block and the pooled 512-d feature."""

    def __init__(self, job: ExtractionJob):
        from torchvision.models import resnet18
        torch.manual_seed(job.seed)  # stub init is reproducible
        self.model = resnet18(weights=None)
        self.checkpoint = "stub"
        if job.scene_weights:
            path = Path(job.scene_weights)
            if not path.exists():
                raise ExtractError(f"scene weights not found: {path}")
            state = torch.load(path, map_location="cpu")
            self.model.load_state_dict(state)
            self.checkpoint = str(path)
        self.model.eval().to(job.device)
        self.device = job.device

    @torch.no_grad()
    def __call__(self, batch: torch.Tensor):
        m = self.model
        x = batch.to(self.device)
        x = m.maxpool(m.relu(m.bn1(m.conv1(x))))
        x = m.layer4(m.layer3(m.layer2(m.layer1(x))))
        pooled = torch.flatten(m.avgpool(x), 1)
        return pooled.cpu().numpy(), x.cpu().numpy()


class NullDetector:
    checkpoint = "none"

    def __call__(self, image: Image.Image):
        return []


class TorchvisionDetector:
    """Faster R-CNN backend. Without --detector-weights the net is random-init:
    structurally faithful, semantically a stub."""

    def __init__(self, job: ExtractionJob):
        from torchvision.models.detection import fasterrcnn_resnet50_fpn
        torch.manual_seed(job.seed)
        self.model = fasterrcnn_resnet50_fpn(weights=None, weights_backbone=None,
                                             min_size=320, max_size=320)
        self.checkpoint = "stub"
        if job.detector_weights:
            path = Path(job.detector_weights)
            if not path.exists():
                raise ExtractError(f"detector weights not found: {path}")
            self.model.load_state_dict(torch.load(path, map_location="cpu"))
            self.checkpoint = str(path)
        self.model.eval().to(job.device)
        self.conf = job.det_conf
        self.device = job.device

    @torch.no_grad()
    def __call__(self, image: Image.Image):
        w, h = image.size
        tensor = torch.from_numpy(
            np.asarray(image, dtype=np.float32).transpose(2, 0, 1) / 255.0)
        out = self.model([tensor.to(self.device)])[0]
        detections = []
        for box, label, score in zip(out["boxes"].cpu().numpy(),
                                     out["labels"].cpu().numpy(),
                                     out["scores"].cpu().numpy()):
            if score < self.conf:
                continue
            if not 0 <= label < len(COCO91):
                continue
            name = COCO91[label]
            if name not in COCO80:
                continue
            x0 = min(max(box[0] / w, 0.0), 1.0)
            y0 = min(max(box[1] / h, 0.0), 1.0)
            x1 = min(max(box[2] / w, 0.0), 1.0)
            y1 = min(max(box[3] / h, 0.0), 1.0)
            detections.append({"name": name,
                               "confidence": float(min(max(score, 0.0), 1.0)),
                               "bbox": [float(x0), float(y0),
                                        float(x1 - x0), float(y1 - y0)]})
        return detections


def build_detector(job: ExtractionJob):
    return TorchvisionDetector(job) if job.detector == "torchvision" else NullDetector()


def _preprocess(image: Image.Image, size: int) -> np.ndarray:
    resized = image.convert("RGB").resize((size, size), Image.BILINEAR)
    arr = np.asarray(resized, dtype=np.float32) / 255.0
    arr = (arr - IMAGENET_MEAN) / IMAGENET_STD
    return arr.transpose(2, 0, 1)


def iter_image_dir(path: Path, stride: int):
    files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise ExtractError(f"no images found under {path}")
    for i, file in enumerate(files):
        if i % stride:
            continue
        try:
            with Image.open(file) as img:
                yield file.stem, img.convert("RGB"), None
        except Exception as exc:
            yield file.stem, None, exc


def iter_video(path: Path, stride: int):
    import cv2
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise ExtractError(f"cannot open video {path}")
    fps = cap.get(cv2.CAP_PROP_FPS) or 30.0
    index = 0
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        if index % stride == 0:
            rgb = Image.fromarray(frame[:, :, ::-1])
            yield f"{path.stem}_{index:06d}", rgb, index / fps
        index += 1
    cap.release()


def extract(job: ExtractionJob) -> dict:
    """Run the job; returns {"frames": n, "skipped": n}. The output file is a
    manifest the engine's loader accepts."""
    source = Path(job.input_path)
    if not source.exists():
        raise ExtractError(f"input not found: {source}")
    trunk = SceneTrunk(job)
    detector = build_detector(job)
    if source.is_dir():
        stream = iter_image_dir(source, job.stride)
        is_video = False
    elif source.suffix.lower() in VIDEO_SUFFIXES:
        stream = iter_video(source, job.stride)
        is_video = True
    else:
        raise ExtractError(f"input must be an image directory or a video: {source}")

    frames = []
    skipped = 0
    blob_shape = None
    for frame_id, image, extra in stream:
        if image is None:
            print(f"warning: skipping undecodable input {frame_id!r}: {extra}",
                  file=sys.stderr)
            skipped += 1
            continue
        tensor = torch.from_numpy(_preprocess(image, job.image_size)[None])
        pooled, blob = trunk(tensor)
        record = {
            "type": "frame",
            "frame_id": frame_id,
            "scene_feature": [float(v) for v in pooled[0]] if "features" in job.fields
                             else [0.0] * pooled.shape[1],
            "feature_blob": None,
            "detections": [],
            "truth": None,
            "pose": None,
            "image_size": [job.image_size, job.image_size],
        }
        if "blobs" in job.fields:
            record["feature_blob"] = blob[0].tolist()
            blob_shape = list(blob[0].shape)
        if "detections" in job.fields:
            record["detections"] = detector(image)
        if is_video:
            record["pose"] = [0.0, 0.0, float(extra)]  # timestamp-only pose
        frames.append(record)
    if not frames:
        raise ExtractError("no frames survived extraction")

    header = {
        "type": "header",
        "class_set": list(job.class_set),
        "feature_dim": len(frames[0]["scene_feature"]),
        "blob_shape": blob_shape,
        "extractor_version": EXTRACTOR_VERSION,
        "scene_checkpoint": trunk.checkpoint,
        "detector": job.detector,
        "detector_checkpoint": detector.checkpoint,
        "stride": job.stride,
        "fields": list(job.fields),
    }
    out = Path(job.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for record in frames:
            fh.write(json.dumps(record) + "\n")
    return {"frames": len(frames), "skipped": skipped}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="extract.py", description="emit perception manifests from images or video")
    parser.add_argument("--input", required=True, help="image directory or video file")
    parser.add_argument("--out", required=True, help="output manifest path")
    parser.add_argument("--stride", type=int, default=1,
                        help="sample every Nth video frame / image")
    parser.add_argument("--fields", default="features,blobs,detections",
                        help="comma list from features,blobs,detections")
    parser.add_argument("--scene-weights", help="ResNet-18 state dict (.pt)")
    parser.add_argument("--detector", choices=["none", "torchvision"], default="none")
    parser.add_argument("--detector-weights", help="Faster R-CNN state dict (.pt)")
    parser.add_argument("--conf", type=float, default=0.5,
                        help="detection confidence floor")
    parser.add_argument("--class-set", default=",".join(HOME7),
                        help="comma list of scene names for the header")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=0,
                        help="init seed for stub weights")
    args = parser.parse_args(argv)
    try:
        job = ExtractionJob(
            input_path=args.input, out_path=args.out, stride=args.stride,
            fields=tuple(f for f in args.fields.split(",") if f),
            scene_weights=args.scene_weights, detector=args.detector,
            detector_weights=args.detector_weights, det_conf=args.conf,
            class_set=tuple(args.class_set.split(",")), device=args.device,
            seed=args.seed)
        stats = extract(job)
    except ExtractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {stats['frames']} frames to {args.out} "
          f"({stats['skipped']} inputs skipped)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
