"""Accuracy bookkeeping: confusion matrices, per-class and macro accuracy,
grouped environment tables (with dash cells where a scene never occurs), and
convergence-speed comparison between training runs."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import ClassSet, DeduceError
from .fusion import ModelBundle, ModelKind, predict
from .linear import TrainReport


@dataclass
class EvalResult:
    class_set: ClassSet
    confusion: np.ndarray      # (K, K) counts, rows = truth, cols = predicted
    n_frames: int
    per_class_accuracy: dict   # scene name -> accuracy (classes with frames only)
    average: float             # macro average over classes present
    micro: float               # frame-weighted accuracy; reported, never gating

    @classmethod
    def from_confusion(cls, class_set, confusion):
        confusion = np.asarray(confusion, dtype=np.int64)
        row_sums = confusion.sum(axis=1)
        per_class = {class_set[i].name: confusion[i, i] / row_sums[i]
                     for i in range(len(class_set)) if row_sums[i] > 0}
        if not per_class:
            raise DeduceError("evaluation saw no frames")
        n = int(confusion.sum())
        return cls(class_set, confusion, n, per_class,
                   float(np.mean(list(per_class.values()))),
                   float(np.trace(confusion) / n))


def evaluate(frames, model: ModelKind, bundle: ModelBundle, jobs=1) -> EvalResult:
    """Run the chosen model over every frame (all must carry truth) and tally
    the confusion matrix. jobs > 1 predicts in a thread pool; the tally is a
    commutative sum, so the result is identical."""
    frames = list(frames)
    if not frames:
        raise DeduceError("evaluate needs at least one frame")
    for frame in frames:
        if frame.truth is None:
            raise DeduceError(f"frame {frame.frame_id!r} has no truth label")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            preds = list(pool.map(lambda f: predict(f, model, bundle), frames))
    else:
        preds = [predict(f, model, bundle) for f in frames]
    class_set = _bundle_class_set(model, bundle)
    confusion = np.zeros((len(class_set), len(class_set)), dtype=np.int64)
    for frame, pred in zip(frames, preds):
        confusion[frame.truth.id, pred.label.id] += 1
    return EvalResult.from_confusion(class_set, confusion)


def _bundle_class_set(model, bundle) -> ClassSet:
    model = ModelKind(model)
    if model is ModelKind.OBJECT_ONLY:
        return bundle.codebook.class_set
    if model is ModelKind.COMBINED:
        return bundle.combined_head.class_set
    if model is ModelKind.SCENE_ATTENTION:
        return bundle.attention_head.class_set
    return bundle.scene_head.class_set


@dataclass
class GroupedResult:
    class_set: ClassSet
    per_group: dict                       # group key -> EvalResult
    per_class_average: dict               # scene name -> mean over groups where present, or None
    grand_average: float                  # mean of per-group macro averages

    def cell(self, scene, group):
        """Accuracy for one table cell, None where the scene never occurs."""
        return self.per_group[group].per_class_accuracy.get(scene)


def grouped_evaluate(groups, model: ModelKind, bundle: ModelBundle,
                     jobs=1) -> GroupedResult:
    """Evaluate each group (e.g. one home / floor per key); per-scene averages
    are taken only over groups where the scene occurs, mirroring dash cells
    for the rest."""
    if not groups:
        raise DeduceError("grouped_evaluate needs at least one group")
    per_group = {}
    for key, frames in groups.items():
        per_group[key] = evaluate(frames, model, bundle, jobs=jobs)
    class_set = next(iter(per_group.values())).class_set
    per_class_average = {}
    for label in class_set:
        cells = [r.per_class_accuracy[label.name] for r in per_group.values()
                 if label.name in r.per_class_accuracy]
        per_class_average[label.name] = float(np.mean(cells)) if cells else None
    grand = float(np.mean([r.average for r in per_group.values()]))
    return GroupedResult(class_set, per_group, per_class_average, grand)


@dataclass
class ConvergenceComparison:
    epochs_a: int | None
    epochs_b: int | None
    faster: str  # "a" | "b" | "tie"


def _faster(ea, eb):
    if ea is None and eb is None:
        return "tie"
    if eb is None or (ea is not None and ea < eb):
        return "a"
    if ea is None or eb < ea:
        return "b"
    return "tie"


def compare_convergence(report_a: TrainReport, report_b: TrainReport,
                        target_acc) -> ConvergenceComparison:
    """Epochs each run needed to first reach target validation accuracy
    (None = never), and which got there first."""
    ea = report_a.epochs_to_reach(target_acc)
    eb = report_b.epochs_to_reach(target_acc)
    return ConvergenceComparison(ea, eb, _faster(ea, eb))


def compare_convergence_relative(report_a: TrainReport, report_b: TrainReport,
                                 fraction=0.9) -> ConvergenceComparison:
    """Same comparison but each run chases `fraction` of its own final
    validation accuracy."""
    ea = report_a.epochs_to_reach(fraction * report_a.final_val_acc)
    eb = report_b.epochs_to_reach(fraction * report_b.final_val_acc)
    return ConvergenceComparison(ea, eb, _faster(ea, eb))


def _fmt(v):
    return "-" if v is None else f"{100 * v:.1f}"


def format_result(result: EvalResult) -> str:
    """Aligned text table, one scene per row plus the macro-average row."""
    width = max(len(n) for n in result.class_set.names) + 2
    lines = [f"{'scene':<{width}}accuracy"]
    for name in result.class_set.names:
        lines.append(f"{name:<{width}}{_fmt(result.per_class_accuracy.get(name))}")
    lines.append(f"{'avg':<{width}}{_fmt(result.average)}")
    return "\n".join(lines)


def format_grouped(result: GroupedResult) -> str:
    keys = list(result.per_group)
    width = max(len(n) for n in result.class_set.names) + 2
    col = max(max((len(str(k)) for k in keys), default=4), 6) + 2
    header = f"{'scene':<{width}}" + "".join(f"{str(k):<{col}}" for k in keys) + "avg"
    lines = [header]
    for name in result.class_set.names:
        cells = "".join(f"{_fmt(result.cell(name, k)):<{col}}" for k in keys)
        lines.append(f"{name:<{width}}{cells}{_fmt(result.per_class_average[name])}")
    grand = "".join(f"{_fmt(result.per_group[k].average):<{col}}" for k in keys)
    lines.append(f"{'avg':<{width}}{grand}{_fmt(result.grand_average)}")
    return "\n".join(lines)


def result_csv_rows(result: EvalResult):
    rows = [["scene", "accuracy", "frames"]]
    for name in result.class_set.names:
        acc = result.per_class_accuracy.get(name)
        count = int(result.confusion[result.class_set.index(name)].sum())
        rows.append([name, "" if acc is None else f"{acc:.6f}", str(count)])
    rows.append(["avg", f"{result.average:.6f}", str(result.n_frames)])
    rows.append(["micro", f"{result.micro:.6f}", str(result.n_frames)])
    return rows


def grouped_csv_rows(result: GroupedResult):
    keys = list(result.per_group)
    rows = [["scene"] + [str(k) for k in keys] + ["avg"]]
    for name in result.class_set.names:
        row = [name]
        for key in keys:
            acc = result.cell(name, key)
            row.append("" if acc is None else f"{acc:.6f}")
        avg = result.per_class_average[name]
        row.append("" if avg is None else f"{avg:.6f}")
        rows.append(row)
    rows.append(["avg"] + [f"{result.per_group[k].average:.6f}" for k in keys]
                + [f"{result.grand_average:.6f}"])
    return rows
