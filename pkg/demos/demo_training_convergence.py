"""Walkthrough: convergence speed of the scene-only head versus the combined
head. The combined input carries the detected-object one-hot block, which a
linear classifier exploits almost immediately, so it reaches its plateau in a
fraction of the epochs the scene head needs."""

import numpy as np

from deduce import HOME7, compare_convergence_relative, train
from deduce.linear import combined_schedule, concat_features, scene_schedule
from deduce.synthgen import generate, home7_preset

SEED = 7

print(__doc__)

models = home7_preset()
frames = generate(models, HOME7, 700, seed=SEED)
train_recs, val_recs = [], []
for k in range(len(HOME7)):
    per_class = [r for r in frames if r.truth.id == k]
    train_recs += per_class[:500]
    val_recs += per_class[500:]

y = np.array([r.truth.id for r in train_recs])
y_val = np.array([r.truth.id for r in val_recs])

X = np.stack([r.scene_feature for r in train_recs])
Xv = np.stack([r.scene_feature for r in val_recs])
print("training scene head ...")
_, scene_report = train(X, y, HOME7, scene_schedule(seed=SEED), Xv, y_val)

Xc = np.stack([concat_features(r.scene_feature, r.detections) for r in train_recs])
Xcv = np.stack([concat_features(r.scene_feature, r.detections) for r in val_recs])
print("training combined head ...")
_, comb_report = train(Xc, y, HOME7, combined_schedule(seed=SEED), Xcv, y_val)

print("\nepoch   scene val acc   combined val acc")
for i in range(12):
    scene = f"{scene_report.epochs[i].val_acc:.3f}" if i < len(scene_report.epochs) else "-"
    comb = f"{comb_report.epochs[i].val_acc:.3f}" if i < len(comb_report.epochs) else "-"
    print(f"{i + 1:<8}{scene:<16}{comb}")
print(f"...     (scene head trains for {len(scene_report.epochs)} epochs)")

cmp = compare_convergence_relative(scene_report, comb_report, fraction=0.9)
print(f"\nscene head: final val acc {scene_report.final_val_acc:.3f}, "
      f"reaches 90% of it at epoch {cmp.epochs_a}")
print(f"combined head: final val acc {comb_report.final_val_acc:.3f}, "
      f"reaches 90% of it at epoch {cmp.epochs_b}")
print(f"faster to its own plateau: {'combined' if cmp.faster == 'b' else 'scene'}")
