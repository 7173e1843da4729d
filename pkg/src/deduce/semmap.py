"""Pose-stamped semantic grids: smooth a label sequence, stamp each pose's
label onto a disc of cells, majority-vote per cell, and render the grid as a
colored map image (one color per scene, white for cells the camera never saw)."""

from __future__ import annotations

from dataclasses import dataclass, field
from collections import Counter

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .core import ClassSet, DeduceError, SceneLabel

UNKNOWN = -1
UNKNOWN_COLOR = (255, 255, 255)

DEFAULT_RESOLUTION = 0.1   # meters per cell
DEFAULT_STAMP_RADIUS = 0.5
DEFAULT_WINDOW = 5

# Distinct, documented colors; white stays reserved for unseen cells.
_BASE_COLORS = (
    (70, 130, 180),   # steel blue
    (255, 140, 0),    # dark orange
    (128, 128, 128),  # gray
    (178, 34, 34),    # firebrick
    (34, 139, 34),    # forest green
    (148, 0, 211),    # dark violet
    (255, 215, 0),    # gold
    (0, 139, 139),    # dark cyan
    (219, 112, 147),  # pale violet red
    (107, 142, 35),   # olive drab
    (30, 30, 120),    # navy-ish
    (139, 69, 19),    # saddle brown
)


def default_palette(class_set: ClassSet) -> dict:
    if len(class_set) > len(_BASE_COLORS):
        raise DeduceError(f"built-in palette covers up to {len(_BASE_COLORS)} classes")
    return {name: _BASE_COLORS[i] for i, name in enumerate(class_set.names)}


def smooth_sequence(labels, window=DEFAULT_WINDOW):
    """Sliding-window majority vote over a time-ordered label sequence.

    The window is centered and truncated at the edges; ties go to the centre
    frame's label. window=1 is the identity.
    """
    labels = list(labels)
    if not labels:
        raise DeduceError("cannot smooth an empty sequence")
    if window < 1 or window % 2 == 0:
        raise DeduceError("window must be odd and >= 1")
    if window == 1:
        return labels
    half = window // 2
    out = []
    for i in range(len(labels)):
        window_labels = labels[max(0, i - half):i + half + 1]
        votes = Counter(lb.id for lb in window_labels)
        best = max(votes.values())
        if votes[labels[i].id] == best:
            out.append(labels[i])  # centre label wins ties
        else:
            winner = min(lid for lid, v in votes.items() if v == best)
            out.append(next(lb for lb in window_labels if lb.id == winner))
    return out


@dataclass
class SemanticGrid:
    """Per-cell stamp counts for every scene class; labels and confidences are
    derived views. Row index grows with +y, column with +x."""

    class_set: ClassSet
    resolution: float = DEFAULT_RESOLUTION
    origin: tuple = (0.0, 0.0)
    counts: np.ndarray = None  # (rows, cols, K) int64

    def __post_init__(self):
        if self.resolution <= 0:
            raise DeduceError("resolution must be > 0")
        if self.counts is None:
            self.counts = np.zeros((1, 1, len(self.class_set)), dtype=np.int64)

    @property
    def shape(self):
        return self.counts.shape[:2]

    def cell_index(self, x, y):
        col = int(np.floor((x - self.origin[0]) / self.resolution))
        row = int(np.floor((y - self.origin[1]) / self.resolution))
        return row, col

    def ensure_contains(self, x, y, margin=0.0):
        """Grow the grid (updating origin) so the point +- margin is inside;
        existing counts are preserved."""
        for (px, py) in ((x - margin, y - margin), (x + margin, y + margin)):
            row, col = self.cell_index(px, py)
            grow_top = max(0, -row)
            grow_left = max(0, -col)
            grow_bottom = max(0, row - (self.shape[0] - 1))
            grow_right = max(0, col - (self.shape[1] - 1))
            if grow_top or grow_left or grow_bottom or grow_right:
                self.counts = np.pad(
                    self.counts,
                    ((grow_top, grow_bottom), (grow_left, grow_right), (0, 0)))
                self.origin = (self.origin[0] - grow_left * self.resolution,
                               self.origin[1] - grow_top * self.resolution)

    def stamp(self, x, y, label: SceneLabel, radius=DEFAULT_STAMP_RADIUS):
        """Add one observation of `label` to every cell whose center lies
        within `radius` of (x, y)."""
        self.ensure_contains(x, y, margin=radius + self.resolution)
        rows, cols = self.shape
        cy = (np.arange(rows) + 0.5) * self.resolution + self.origin[1]
        cx = (np.arange(cols) + 0.5) * self.resolution + self.origin[0]
        mask = ((cy - y) ** 2)[:, None] + ((cx - x) ** 2)[None, :] <= radius ** 2
        self.counts[:, :, label.id] += mask

    @property
    def visit_count(self) -> np.ndarray:
        return self.counts.sum(axis=2)

    @property
    def labels(self) -> np.ndarray:
        """Majority label id per cell (ties to the lower id), UNKNOWN where
        never visited."""
        ids = np.argmax(self.counts, axis=2)
        ids[self.visit_count == 0] = UNKNOWN
        return ids

    @property
    def confidence(self) -> np.ndarray:
        total = self.visit_count
        majority = self.counts.max(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            conf = np.where(total > 0, majority / np.maximum(total, 1), 0.0)
        return conf


def rasterize(frames, labels, class_set: ClassSet, resolution=DEFAULT_RESOLUTION,
              stamp_radius=DEFAULT_STAMP_RADIUS) -> SemanticGrid:
    """Stamp each posed frame's (smoothed) label onto the grid. The grid
    auto-expands to reach every pose; no frame is dropped."""
    frames = list(frames)
    labels = list(labels)
    if len(frames) != len(labels):
        raise DeduceError("one label per frame required")
    posed = [(f, lb) for f, lb in zip(frames, labels) if f.pose is not None]
    if not posed:
        raise DeduceError("rasterize needs at least one frame with a pose")
    first = posed[0][0].pose
    # snap the origin to the resolution lattice so the tessellation (and with
    # it every cell's majority) does not depend on frame order
    origin = (resolution * np.floor((first[0] - stamp_radius) / resolution - 1),
              resolution * np.floor((first[1] - stamp_radius) / resolution - 1))
    grid = SemanticGrid(class_set, resolution, origin)
    for frame, label in posed:
        x, y, _ = frame.pose
        grid.stamp(x, y, label, stamp_radius)
    return grid


def legend_entries(grid: SemanticGrid, palette=None):
    """(name, color) pairs listed in the rendered legend: every class in the
    set plus the Unknown entry."""
    palette = palette or default_palette(grid.class_set)
    entries = [(name, palette[name]) for name in grid.class_set.names]
    entries.append(("unknown", UNKNOWN_COLOR))
    return entries


def _check_palette(class_set, palette):
    colors = []
    for name in class_set.names:
        if name not in palette:
            raise DeduceError(f"palette lacks a color for {name!r}")
        colors.append(tuple(palette[name]))
    if UNKNOWN_COLOR in colors or len(set(colors)) != len(colors):
        raise DeduceError("palette colors must be pairwise distinct and non-white")


def render(grid: SemanticGrid, palette=None, cell_px=4, legend=True) -> Image.Image:
    """Color image of the grid, one cell_px block per cell, +y upward (last
    grid row at the top). Optionally appends a legend strip underneath."""
    palette = palette or default_palette(grid.class_set)
    _check_palette(grid.class_set, palette)
    ids = grid.labels
    rows, cols = ids.shape
    lut = np.array([palette[name] for name in grid.class_set.names] + [UNKNOWN_COLOR],
                   dtype=np.uint8)
    rgb = lut[ids]  # UNKNOWN == -1 indexes the appended white entry
    rgb = rgb[::-1]  # +y up
    rgb = np.repeat(np.repeat(rgb, cell_px, axis=0), cell_px, axis=1)
    img = Image.fromarray(rgb, "RGB")
    if not legend:
        return img
    entries = legend_entries(grid, palette)
    row_h = 14
    strip = Image.new("RGB", (max(img.width, 140), row_h * len(entries)), (240, 240, 240))
    draw = ImageDraw.Draw(strip)
    font = ImageFont.load_default()
    for i, (name, color) in enumerate(entries):
        y0 = i * row_h + 2
        draw.rectangle([2, y0, 12, y0 + 10], fill=tuple(color), outline=(0, 0, 0))
        draw.text((18, y0 - 1), name, fill=(0, 0, 0), font=font)
    out = Image.new("RGB", (strip.width, img.height + strip.height), (255, 255, 255))
    out.paste(img, (0, 0))
    out.paste(strip, (0, img.height))
    return out


def save_ppm(image: Image.Image, path, comment=None):
    """Binary P6 dump of the rendered map, optionally with a header comment."""
    arr = np.asarray(image.convert("RGB"), dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n")
        if comment:
            fh.write(f"# {comment}\n".encode())
        fh.write(f"{arr.shape[1]} {arr.shape[0]}\n255\n".encode())
        fh.write(arr.tobytes())
