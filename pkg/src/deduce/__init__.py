"""Indoor place categorization from cached perception features: five fusion
models over scene features and object detections, a from-scratch linear-head
trainer, synthetic data with an exact Bayes oracle, an evaluation harness, and
semantic grid mapping."""

__version__ = "0.1.0"

from .core import (COCO_CLASSES, ClassSet, DeduceError, Detection, FrameRecord,
                   HOME7, Manifest, ManifestError, MissingAssetError, OFFICE5,
                   SceneLabel, detection, load_manifest, save_manifest, softmax)
from .codebook import (Codebook, classify_objects, default_codebook,
                       load_codebook, office5_codebook, save_codebook)
from .linear import (LinearHead, TrainConfig, TrainReport, analytic_gradient,
                     combined_schedule, concat_features, cross_entropy, forward,
                     load_head, save_head, scene_schedule, train)
from .attention import Heatmap, activation_map, bilinear_upsample, blob_to_logits, classify_attn
from .fusion import (ModelBundle, ModelKind, NBestConfig, Prediction,
                     predict, predict_n_best, write_predictions)
from .synthgen import (SceneModel, bayes_oracle, generate, home7_preset,
                       load_preset, office5_preset, oracle_posteriors, save_preset)
from .evalharness import (EvalResult, GroupedResult, compare_convergence,
                          compare_convergence_relative, evaluate, grouped_evaluate)
from .semmap import SemanticGrid, default_palette, rasterize, render, smooth_sequence
