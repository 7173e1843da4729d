"""Single `deduce` executable: synth / train / predict / eval / cam / map.

Exit codes: 0 success, 1 usage error (usage text printed), 2 anticipated
data/validation error (message names the offending frame or field). Every
output file starts with a provenance header (tool version, seed, config hash)
so identical inputs reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from . import __version__
from .attention import activation_map
from .codebook import default_codebook, load_codebook
from .core import ClassSet, DeduceError, load_manifest, save_manifest
from .evalharness import (evaluate, format_grouped, format_result,
                          grouped_csv_rows, grouped_evaluate, result_csv_rows)
from .fusion import (MODEL_ALIASES, ModelBundle, ModelKind, NBestConfig,
                     THRESHOLD_PRESETS, predict, write_predictions)
from .linear import (LinearHead, TrainConfig, combined_schedule, concat_features,
                     load_head, save_head, scene_schedule, train)
from .semmap import (DEFAULT_RESOLUTION, DEFAULT_STAMP_RADIUS, DEFAULT_WINDOW,
                     rasterize, render, save_ppm, smooth_sequence)
from .synthgen import PRESETS, generate, load_preset

HEAD_FILES = {"scene": "scene.head.json", "combined": "combined.head.json",
              "attention": "attention.head.json"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _config_hash(args) -> str:
    payload = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("DEDUCE_SEED")
    return int(env) if env else 0


def _provenance(args) -> dict:
    return {"tool_version": __version__, "seed": _seed(args),
            "config_hash": _config_hash(args)}


def _save_png(image: Image.Image, path, args):
    info = PngInfo()
    info.add_text("provenance", json.dumps(_provenance(args), sort_keys=True))
    image.save(path, format="PNG", pnginfo=info)


def _require_file(path, what):
    if not Path(path).exists():
        raise DeduceError(f"{what} not found: {path}")
    return path


def _map_frames(frames, fn, jobs):
    if jobs <= 1:
        return [fn(f) for f in frames]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, frames))


def _load_bundle(args, model: ModelKind, class_set_hint=None) -> ModelBundle:
    bundle = ModelBundle(min_conf=getattr(args, "min_conf", 0.5))
    heads = getattr(args, "heads", None)
    def head_path(role):
        return Path(heads) / HEAD_FILES[role]
    if model in (ModelKind.SCENE_ONLY, ModelKind.N_BEST):
        if heads is None:
            raise DeduceError(f"model {model.value} needs --heads")
        bundle.scene_head = load_head(_require_file(head_path("scene"), "scene head"))
    if model is ModelKind.COMBINED:
        if heads is None:
            raise DeduceError("model combined needs --heads")
        bundle.combined_head = load_head(_require_file(head_path("combined"), "combined head"))
    if model is ModelKind.SCENE_ATTENTION:
        if heads is None:
            raise DeduceError("model attention needs --heads")
        bundle.attention_head = load_head(_require_file(head_path("attention"), "attention head"))
    if model in (ModelKind.OBJECT_ONLY, ModelKind.N_BEST):
        class_set = class_set_hint
        if bundle.scene_head is not None:
            class_set = bundle.scene_head.class_set
        if getattr(args, "codebook", None):
            cb = load_codebook(args.codebook, class_set)
        else:
            cb = default_codebook(class_set) if class_set else default_codebook()
        bundle.codebook = cb
        if model is ModelKind.N_BEST:
            threshold = args.threshold
            if threshold is None:
                threshold = THRESHOLD_PRESETS[args.threshold_preset]
            bundle.nbest = NBestConfig(cb, threshold, bundle.min_conf)
    return bundle


def cmd_synth(args):
    if args.preset_file:
        models, class_set = load_preset(args.preset_file)
    else:
        factory, class_set = PRESETS[args.preset]
        kwargs = {"feature_dim": args.feature_dim}
        models = factory(**kwargs)
    blob_shape = tuple(args.blob_shape) if args.blob_shape else None
    records = generate(models, class_set, args.n, _seed(args), blob_shape=blob_shape)
    save_manifest(args.out, records, class_set, extra_header=_provenance(args))
    print(f"wrote {len(records)} frames to {args.out}")
    return 0


def _training_matrices(manifest, role, min_conf):
    feats, labels = [], []
    for frame in manifest:
        if frame.truth is None:
            raise DeduceError(f"frame {frame.frame_id!r} has no truth label; cannot train")
        if role == "combined":
            feats.append(concat_features(frame.scene_feature, frame.detections, min_conf))
        elif role == "attention":
            if frame.feature_blob is None:
                raise DeduceError(f"frame {frame.frame_id!r} has no feature_blob; "
                                  "cannot train an attention head")
            feats.append(frame.feature_blob.mean(axis=(1, 2)))
        else:
            feats.append(frame.scene_feature)
        labels.append(frame.truth.id)
    return np.stack(feats), np.asarray(labels)


def cmd_train(args):
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    X, y = _training_matrices(manifest, args.model, args.min_conf)
    schedule = combined_schedule if args.model == "combined" else scene_schedule
    overrides = dict(seed=_seed(args))
    for name in ("epochs", "lr0", "momentum", "weight_decay", "lr_drop_every",
                 "lr_drop_factor", "batch_size"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    cfg = schedule(**overrides)
    val = (None, None)
    if args.val:
        vman = load_manifest(args.val, manifest.class_set)
        val = _training_matrices(vman, args.model, args.min_conf)
    head, report = train(X, y, manifest.class_set, cfg, val[0], val[1])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_head(head, out, seed=cfg.seed, config_hash=cfg.hash(),
              extra={"tool_version": __version__, "role": args.model})
    last = report.epochs[-1]
    print(f"trained {args.model} head: {len(report.epochs)} epochs, "
          f"final loss {last.train_loss:.4f}, train acc {last.train_acc:.3f}, "
          f"val acc {last.val_acc:.3f}")
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(f"# provenance {json.dumps(_provenance(args), sort_keys=True)}\n")
            fh.write("epoch,lr,train_loss,train_acc,val_acc\n")
            for ep in report.epochs:
                fh.write(f"{ep.epoch},{ep.lr},{ep.train_loss},{ep.train_acc},{ep.val_acc}\n")
    return 0


def cmd_predict(args):
    model = MODEL_ALIASES[args.model]
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    bundle = _load_bundle(args, model, class_set_hint=manifest.class_set)
    preds = _map_frames(manifest.records, lambda f: predict(f, model, bundle), args.jobs)
    write_predictions(args.out, manifest.records, preds, manifest.class_set,
                      extra_header=_provenance(args))
    print(f"wrote {len(preds)} predictions to {args.out}")
    return 0


def _parse_manifest_args(entries):
    """Each entry is PATH or KEY=PATH; returns ordered {key: path}."""
    groups = {}
    for entry in entries:
        if "=" in entry:
            key, path = entry.split("=", 1)
        else:
            key, path = Path(entry).stem, entry
        if key in groups:
            raise DeduceError(f"duplicate group key {key!r}")
        groups[key] = path
    return groups


def cmd_eval(args):
    model = MODEL_ALIASES[args.model]
    paths = _parse_manifest_args(args.manifest)
    manifests = {k: load_manifest(_require_file(p, "manifest")) for k, p in paths.items()}
    class_set = next(iter(manifests.values())).class_set
    bundle = _load_bundle(args, model, class_set_hint=class_set)
    for manifest in manifests.values():
        for frame in manifest:
            if frame.truth is None:
                raise DeduceError(f"frame {frame.frame_id!r} has no truth label")
    if args.group_by == "frame-prefix":
        # group key = frame_id up to the first '/'
        groups = {}
        for manifest in manifests.values():
            for frame in manifest:
                groups.setdefault(frame.frame_id.split("/")[0], []).append(frame)
    else:
        groups = {k: m.records for k, m in manifests.items()}
    if len(groups) == 1:
        result = evaluate(next(iter(groups.values())), model, bundle, jobs=args.jobs)
        print(format_result(result))
        rows = result_csv_rows(result)
    else:
        grouped = grouped_evaluate(groups, model, bundle, jobs=args.jobs)
        print(format_grouped(grouped))
        rows = grouped_csv_rows(grouped)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(f"# provenance {json.dumps(_provenance(args), sort_keys=True)}\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
    return 0


def cmd_cam(args):
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    head = load_head(_require_file(args.head, "attention head"))
    frame = next((f for f in manifest if f.frame_id == args.frame), None)
    if frame is None:
        raise DeduceError(f"frame {args.frame!r} not found in {args.manifest}")
    if frame.feature_blob is None:
        raise DeduceError(f"frame {args.frame!r} carries no feature_blob")
    out_size = tuple(args.out_size) if args.out_size else frame.image_size
    heat = activation_map(frame.feature_blob, head, target=args.target or "argmax",
                          out_size=out_size)
    gray = Image.fromarray((heat.values * 255).round().astype(np.uint8), "L")
    _save_png(gray, args.out, args)
    print(f"class {heat.predicted.name}: wrote heatmap to {args.out}")
    if args.image:
        base = Image.open(args.image).convert("RGB").resize(gray.size)
        overlay = _false_color(heat.values)
        blended = Image.blend(base, overlay, 0.5)
        _save_png(blended, args.overlay or "overlay.png", args)
        print(f"wrote overlay to {args.overlay or 'overlay.png'}")
    return 0


def _false_color(values) -> Image.Image:
    """Blue->cyan->yellow->red ramp over [0,1]."""
    v = np.clip(values, 0.0, 1.0)
    r = np.clip(2.0 * v - 0.5, 0, 1)
    g = np.clip(1.5 - np.abs(2.0 * v - 1.0) * 1.5, 0, 1)
    b = np.clip(1.0 - 2.0 * v, 0, 1)
    rgb = (np.stack([r, g, b], axis=-1) * 255).round().astype(np.uint8)
    return Image.fromarray(rgb, "RGB")


def cmd_map(args):
    model = MODEL_ALIASES[args.model]
    manifest = load_manifest(_require_file(args.manifest, "manifest"))
    posed = [f for f in manifest if f.pose is not None]
    if not posed:
        raise DeduceError(f"{args.manifest}: no frames carry a pose")
    bundle = _load_bundle(args, model, class_set_hint=manifest.class_set)
    preds = _map_frames(posed, lambda f: predict(f, model, bundle), args.jobs)
    labels = smooth_sequence([p.label for p in preds], args.window)
    grid = rasterize(posed, labels, manifest.class_set,
                     resolution=args.resolution, stamp_radius=args.stamp_radius)
    image = render(grid, cell_px=args.cell_px)
    _save_png(image, args.out, args)
    if args.ppm:
        save_ppm(image, args.ppm,
                 comment=f"provenance {json.dumps(_provenance(args), sort_keys=True)}")
    rows, cols = grid.shape
    print(f"wrote {rows}x{cols} cell map to {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="deduce", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic manifest")
    p.add_argument("--preset", choices=sorted(PRESETS), default="home7")
    p.add_argument("--preset-file")
    p.add_argument("--n", type=int, required=True, help="frames per class")
    p.add_argument("--seed", type=int)
    p.add_argument("--feature-dim", type=int, default=512)
    p.add_argument("--blob-shape", type=int, nargs=3, metavar=("C", "H", "W"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a linear head on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", choices=["scene", "combined", "attention"], default="scene")
    p.add_argument("--val", help="validation manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write per-epoch CSV here")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr0", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--drop-every", type=int, dest="lr_drop_every")
    p.add_argument("--drop-factor", type=float, dest="lr_drop_factor")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--min-conf", type=float, default=0.5, dest="min_conf")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="emit one prediction per frame")
    p.add_argument("--model", choices=sorted(MODEL_ALIASES), required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--heads", help="directory holding *.head.json files")
    p.add_argument("--codebook")
    p.add_argument("--threshold", type=float)
    p.add_argument("--threshold-preset", choices=sorted(THRESHOLD_PRESETS),
                   default="places")
    p.add_argument("--min-conf", type=float, default=0.5, dest="min_conf")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="accuracy tables over labeled manifests")
    p.add_argument("--model", choices=sorted(MODEL_ALIASES), required=True)
    p.add_argument("--manifest", action="append", required=True,
                   metavar="[KEY=]PATH", help="repeat for grouped evaluation")
    p.add_argument("--group-by", choices=["manifest", "frame-prefix"],
                   default="manifest", dest="group_by",
                   help="group rows per manifest or by frame_id prefix before '/'")
    p.add_argument("--heads")
    p.add_argument("--codebook")
    p.add_argument("--threshold", type=float)
    p.add_argument("--threshold-preset", choices=sorted(THRESHOLD_PRESETS),
                   default="places")
    p.add_argument("--min-conf", type=float, default=0.5, dest="min_conf")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cam", help="write a class-activation heatmap PNG")
    p.add_argument("--manifest", required=True)
    p.add_argument("--head", required=True)
    p.add_argument("--frame", required=True)
    p.add_argument("--target", help="class name (default: predicted class)")
    p.add_argument("--out-size", type=int, nargs=2, metavar=("W", "H"))
    p.add_argument("--image", help="optional RGB image to overlay")
    p.add_argument("--overlay", help="overlay output path")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cam)

    p = sub.add_parser("map", help="render a semantic grid map from posed frames")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", choices=sorted(MODEL_ALIASES), default="nbest")
    p.add_argument("--heads")
    p.add_argument("--codebook")
    p.add_argument("--threshold", type=float)
    p.add_argument("--threshold-preset", choices=sorted(THRESHOLD_PRESETS),
                   default="places")
    p.add_argument("--min-conf", type=float, default=0.5, dest="min_conf")
    p.add_argument("--resolution", type=float, default=DEFAULT_RESOLUTION)
    p.add_argument("--stamp-radius", type=float, default=DEFAULT_STAMP_RADIUS,
                   dest="stamp_radius")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--cell-px", type=int, default=4, dest="cell_px")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--ppm")
    p.set_defaults(func=cmd_map)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DeduceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint():
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
