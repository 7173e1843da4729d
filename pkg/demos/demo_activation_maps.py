"""Walkthrough: train a head on pooled spatial blobs, then compute class
activation heatmaps and write them (plus a false-color overlay) as PNGs.

The heatmap weights each blob channel by the classifier row of the target
class: bright regions are the cells that pushed the decision."""

from pathlib import Path

import numpy as np
from PIL import Image

from deduce import HOME7, activation_map, classify_attn, train
from deduce.linear import TrainConfig
from deduce.synthgen import generate, home7_preset

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)
SEED = 11
BLOB_SHAPE = (32, 14, 14)

print(__doc__)

# a well-separated preset so the short training run converges
models = home7_preset(feature_dim=64, mean_scale=0.6, sigma=0.2)
train_recs = generate(models, HOME7, 60, seed=SEED, blob_shape=BLOB_SHAPE)
test_recs = generate(models, HOME7, 5, seed=SEED + 1, blob_shape=BLOB_SHAPE)

X = np.stack([r.feature_blob.mean(axis=(1, 2)) for r in train_recs])
y = np.array([r.truth.id for r in train_recs])
print(f"training attention head on {len(X)} pooled {BLOB_SHAPE} blobs ...")
head, report = train(X, y, HOME7, TrainConfig(epochs=30, lr_drop_every=10, seed=SEED))
print(f"final training accuracy {report.epochs[-1].train_acc:.3f}")

hits = 0
for frame in test_recs:
    label, posterior, heat = classify_attn(frame.feature_blob, head,
                                           out_size=frame.image_size)
    hits += label == frame.truth
print(f"blob classification: {hits}/{len(test_recs)} correct on fresh frames")

frame = test_recs[0]
label, posterior, heat = classify_attn(frame.feature_blob, head)
print(f"\nframe {frame.frame_id}: predicted {label.name} "
      f"(p={posterior[label.id]:.2f}, truth {frame.truth.name})")
print(f"heatmap spans [{heat.values.min():.0f}, {heat.values.max():.0f}] "
      f"at {heat.values.shape}, upsampled from {heat.source_shape}")

gray = Image.fromarray((heat.values * 255).round().astype(np.uint8), "L")
gray_path = OUT / f"cam_{frame.frame_id}.png"
gray.save(gray_path)
print(f"wrote grayscale heatmap to {gray_path}")

# same ramp the CLI uses for its overlay
v = heat.values
rgb = np.stack([np.clip(2 * v - 0.5, 0, 1),
                np.clip(1.5 - np.abs(2 * v - 1) * 1.5, 0, 1),
                np.clip(1 - 2 * v, 0, 1)], axis=-1)
color_path = OUT / f"cam_{frame.frame_id}_color.png"
Image.fromarray((rgb * 255).round().astype(np.uint8), "RGB").save(color_path)
print(f"wrote false-color heatmap to {color_path}")

# localization: plant activation in one blob cell on the channel this class
# weights the most, and watch the heatmap peak land on its image position
channel = int(np.argmax(head.weights[label.id]))
sparse = np.zeros(BLOB_SHAPE)
sparse[channel, 3, 10] = 1.0
spot = activation_map(sparse, head, target=label, out_size=(224, 224))
peak = np.unravel_index(np.argmax(spot.values), spot.values.shape)
print(f"\ninjected a hot cell at blob position (3, 10) on channel {channel}")
print(f"heatmap peak lands at image pixel {tuple(int(v) for v in peak)} "
      f"(expected near ({3 * 223 // 13}, {10 * 223 // 13}))")
