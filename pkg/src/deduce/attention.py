"""Class-activation heatmaps: weight the spatial feature blob by the final
linear layer's row for a target class, normalize, and upsample to image size.
Classification from a blob goes through global average pooling into the same
head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DeduceError, SceneLabel, softmax
from .linear import LinearHead


@dataclass
class Heatmap:
    values: np.ndarray            # (H_img, W_img), min 0 / max 1 unless flat
    source_shape: tuple           # (H_b, W_b)
    predicted: SceneLabel


def _check_blob(blob, head):
    blob = np.asarray(blob, dtype=np.float64)
    if blob.ndim != 3:
        raise DeduceError(f"feature blob must be (C, H, W), got shape {blob.shape}")
    if blob.shape[0] != head.input_dim:
        raise DeduceError(
            f"blob has {blob.shape[0]} channels, head expects {head.input_dim}")
    return blob


def blob_to_logits(blob, head: LinearHead) -> np.ndarray:
    """Global-average-pool the blob over its spatial axes, then apply the
    head's affine map."""
    blob = _check_blob(blob, head)
    pooled = blob.mean(axis=(1, 2))
    return head.logits(pooled)


def bilinear_upsample(src, out_hw) -> np.ndarray:
    """Align-corners bilinear interpolation of a 2-D map onto (H_out, W_out).

    Corner samples land exactly on corner pixels; exact on affine ramps.
    Output size must not shrink the source.
    """
    src = np.asarray(src, dtype=np.float64)
    h, w = src.shape
    H, W = int(out_hw[0]), int(out_hw[1])
    if H <= 0 or W <= 0:
        raise DeduceError("output size must be positive")
    if H < h or W < w:
        raise DeduceError(f"refusing to downsample {src.shape} -> {(H, W)}")
    ys = np.arange(H) * ((h - 1) / (H - 1)) if H > 1 else np.zeros(1)
    xs = np.arange(W) * ((w - 1) / (W - 1)) if W > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def _minmax(arr):
    lo, hi = arr.min(), arr.max()
    if hi == lo:
        return np.zeros_like(arr)
    return (arr - lo) / (hi - lo)


def activation_map(blob, head: LinearHead, target="argmax", out_size=(224, 224)) -> Heatmap:
    """Heatmap for a target class: raw[h, w] = sum_c weights[target, c] *
    blob[c, h, w], min-max normalized and bilinearly upsampled so the final
    map spans exactly [0, 1] (a flat raw map renders all-zero).

    out_size follows image convention (W_img, H_img). target may be a
    SceneLabel, a class name, or "argmax".
    """
    blob = _check_blob(blob, head)
    if target == "argmax":
        label = head.class_set[int(np.argmax(blob_to_logits(blob, head)))]
    elif isinstance(target, SceneLabel):
        label = target
    else:
        label = head.class_set.label(target)
    raw = np.tensordot(head.weights[label.id], blob, axes=1)  # (H_b, W_b)
    out_w, out_h = int(out_size[0]), int(out_size[1])
    values = _minmax(bilinear_upsample(_minmax(raw), (out_h, out_w)))
    return Heatmap(values, raw.shape, label)


def classify_attn(blob, head: LinearHead, out_size=(224, 224)):
    """Pooled-blob classification plus the heatmap of the winning class.

    Returns (label, posterior, heatmap)."""
    logits = blob_to_logits(blob, head)
    posterior = softmax(logits)
    label = head.class_set[int(np.argmax(logits))]
    heat = activation_map(blob, head, target=label, out_size=out_size)
    return label, posterior, heat
