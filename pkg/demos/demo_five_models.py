"""Walkthrough: generate a synthetic home dataset, train the two learnable
heads, and compare all five prediction models on a held-out split.

The table printed at the end mirrors the usual result layout: one row per
scene, one column per model, macro average at the bottom. Expect the combined
model on top, scene-only close behind, object-only trailing (it can only see
landmarks), and the Bayes oracle above everything.
"""

import numpy as np

from deduce import (HOME7, ModelBundle, ModelKind, NBestConfig, default_codebook,
                    evaluate, train)
from deduce.linear import combined_schedule, concat_features, scene_schedule
from deduce.synthgen import generate, home7_preset, oracle_posteriors

SEED = 7
N_TRAIN, N_TEST = 500, 200

print(__doc__)

models = home7_preset()
frames = generate(models, HOME7, N_TRAIN + N_TEST, seed=SEED)
train_recs, test_recs = [], []
for k in range(len(HOME7)):
    per_class = [r for r in frames if r.truth.id == k]
    train_recs += per_class[:N_TRAIN]
    test_recs += per_class[N_TRAIN:]
print(f"generated {len(train_recs)} training and {len(test_recs)} test frames")

X_scene = np.stack([r.scene_feature for r in train_recs])
X_comb = np.stack([concat_features(r.scene_feature, r.detections) for r in train_recs])
y = np.array([r.truth.id for r in train_recs])

print("training scene head (90-epoch schedule) ...")
scene_head, _ = train(X_scene, y, HOME7, scene_schedule(seed=SEED))
print("training combined head (9-epoch schedule) ...")
combined_head, _ = train(X_comb, y, HOME7, combined_schedule(seed=SEED))

codebook = default_codebook()
bundle = ModelBundle(scene_head=scene_head, combined_head=combined_head,
                     codebook=codebook, nbest=NBestConfig(codebook, threshold=0.5))

# the attention model needs spatial blobs, demonstrated in demo_activation_maps
columns = [ModelKind.SCENE_ONLY, ModelKind.OBJECT_ONLY, ModelKind.COMBINED,
           ModelKind.N_BEST]
results = {kind: evaluate(test_recs, kind, bundle) for kind in columns}

oracle = oracle_posteriors(models, HOME7, test_recs).argmax(axis=1)
y_te = np.array([r.truth.id for r in test_recs])
oracle_per_class = {HOME7[k].name: float(np.mean(oracle[y_te == k] == k))
                    for k in range(7)}

header = f"{'scene':<14}" + "".join(f"{kind.value:>14}" for kind in columns) + f"{'bayes':>10}"
print()
print(header)
for name in HOME7.names:
    row = f"{name:<14}"
    for kind in columns:
        row += f"{100 * results[kind].per_class_accuracy[name]:>14.1f}"
    row += f"{100 * oracle_per_class[name]:>10.1f}"
    print(row)
avg = f"{'avg':<14}" + "".join(f"{100 * results[k].average:>14.1f}" for k in columns)
avg += f"{100 * np.mean(list(oracle_per_class.values())):>10.1f}"
print(avg)

best = max(columns, key=lambda k: results[k].average)
print(f"\nbest model: {best.value} at {100 * results[best].average:.1f}% macro accuracy")
