"""Walkthrough: simulate a robot tour through four rooms, label every posed
frame with the N-best model, smooth the label track, rasterize it onto a grid
and render the colored map. Cells the trajectory never covered stay white."""

from pathlib import Path

import numpy as np

from deduce import (HOME7, ModelBundle, ModelKind, NBestConfig, default_codebook,
                    predict, rasterize, render, smooth_sequence, train)
from deduce.core import FrameRecord
from deduce.linear import scene_schedule
from deduce.semmap import save_ppm
from deduce.synthgen import generate, home7_preset

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)
SEED = 7

print(__doc__)

models = home7_preset()
pool = generate(models, HOME7, 260, seed=SEED)
train_recs = [r for r in pool if int(r.frame_id.split("_")[-1]) < 200]
spare = {name: [r for r in pool if r.truth.name == name
                and int(r.frame_id.split("_")[-1]) >= 200] for name in HOME7.names}

X = np.stack([r.scene_feature for r in train_recs])
y = np.array([r.truth.id for r in train_recs])
print("training scene head for the tour ...")
scene_head, _ = train(X, y, HOME7, scene_schedule(seed=SEED))

# a four-segment tour: kitchen -> corridor -> living room -> office,
# 60 poses per room along a snaking path
rooms = ["kitchen", "corridor", "living_room", "office"]
waypoints = [(0.0, 0.0), (6.0, 0.0), (6.0, 4.0), (0.0, 4.0), (0.0, 8.0)]
frames = []
t = 0.0
for seg, room in enumerate(rooms):
    (x0, y0), (x1, y1) = waypoints[seg], waypoints[seg + 1]
    for i in range(60):
        alpha = i / 59
        source = spare[room][i]
        frames.append(FrameRecord(
            f"tour_{seg:02d}_{i:03d}", source.scene_feature,
            detections=source.detections, truth=source.truth,
            pose=(x0 + alpha * (x1 - x0), y0 + alpha * (y1 - y0), t)))
        t += 0.4
print(f"tour has {len(frames)} posed frames over {t:.0f} simulated seconds")

codebook = default_codebook()
bundle = ModelBundle(scene_head=scene_head, codebook=codebook,
                     nbest=NBestConfig(codebook, threshold=0.5))
predictions = [predict(f, ModelKind.N_BEST, bundle) for f in frames]
raw_labels = [p.label for p in predictions]
labels = smooth_sequence(raw_labels, window=5)
flips = sum(1 for a, b in zip(raw_labels, labels) if a != b)
print(f"smoothing changed {flips} of {len(labels)} frame labels")

truth_hits = sum(1 for f, lb in zip(frames, labels) if lb == f.truth)
print(f"smoothed labels match the tour's ground truth on "
      f"{truth_hits}/{len(frames)} frames")

grid = rasterize(frames, labels, HOME7, resolution=0.1, stamp_radius=0.5)
rows, cols = grid.shape
print(f"grid: {rows} x {cols} cells at {grid.resolution} m, "
      f"{int((grid.visit_count > 0).sum())} visited")

image = render(grid, cell_px=4)
png = OUT / "tour_map.png"
image.save(png)
save_ppm(image, OUT / "tour_map.ppm")
print(f"wrote {png} (legend strip at the bottom; white = never seen)")
