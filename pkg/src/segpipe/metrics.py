"""Confusion counting, per-class IOU, mean IOU, throughput benchmarking,
and report files.

IOU per class is TP / (TP + FP + FN) over pixel counts, computed in
float64 from exact integer tallies. A class absent from both rasters
(tp = fp = fn = 0) carries no information and is excluded from the mean
rather than scored 0 or 1.
"""

import csv
import json
import platform
import time
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError


@dataclass(eq=False)
class ConfusionCounts:
    tp: np.ndarray  # int64, one entry per class
    fp: np.ndarray
    fn: np.ndarray

    @classmethod
    def zeros(cls, num_classes: int):
        z = lambda: np.zeros(num_classes, dtype=np.int64)
        return cls(tp=z(), fp=z(), fn=z())

    @property
    def num_classes(self) -> int:
        return len(self.tp)

    def __add__(self, other):
        if self.num_classes != other.num_classes:
            raise DataError(
                f"cannot merge counts over {self.num_classes} and "
                f"{other.num_classes} classes"
            )
        return ConfusionCounts(tp=self.tp + other.tp, fp=self.fp + other.fp,
                               fn=self.fn + other.fn)


def confusion_counts(pred: np.ndarray, truth: np.ndarray,
                     num_classes: int) -> ConfusionCounts:
    """Per-class TP/FP/FN pixel tallies for one prediction/truth pair."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DataError(f"pred shape {pred.shape} != truth shape {truth.shape}")
    if pred.size == 0:
        raise DataError("label maps are empty")
    p = pred.astype(np.int64).ravel()
    t = truth.astype(np.int64).ravel()
    for name, arr in (("pred", p), ("truth", t)):
        lo, hi = int(arr.min()), int(arr.max())
        if lo < 0 or hi >= num_classes:
            raise DataError(
                f"{name} labels must lie in [0, {num_classes}), "
                f"found range [{lo}, {hi}]"
            )
    cm = np.bincount(t * num_classes + p,
                     minlength=num_classes * num_classes)
    cm = cm.reshape(num_classes, num_classes)  # rows: truth, cols: pred
    tp = np.diag(cm).copy()
    return ConfusionCounts(tp=tp, fp=cm.sum(axis=0) - tp, fn=cm.sum(axis=1) - tp)


def iou(tp: int, fp: int, fn: int) -> float | None:
    """TP / (TP + FP + FN); None when the class appears in neither raster."""
    if min(tp, fp, fn) < 0:
        raise DataError("counts must be non-negative")
    denom = tp + fp + fn
    if denom == 0:
        return None
    return tp / denom


@dataclass
class IouReport:
    per_class: list  # float or None per class, in index order
    mean_iou: float
    classes_counted: int


def mean_iou(per_class) -> IouReport:
    """Arithmetic mean over the non-absent per-class IOUs."""
    per_class = list(per_class)
    present = [v for v in per_class if v is not None]
    if not present:
        raise DataError("all classes are absent; mean IOU is undefined")
    return IouReport(per_class=per_class,
                     mean_iou=float(np.mean(np.asarray(present, dtype=np.float64))),
                     classes_counted=len(present))


def report_from_counts(counts: ConfusionCounts) -> IouReport:
    return mean_iou(
        iou(int(counts.tp[c]), int(counts.fp[c]), int(counts.fn[c]))
        for c in range(counts.num_classes)
    )


def check_reported_ious(counts: ConfusionCounts, reported, tol: float = 0.05):
    """Per class, True when a reported IOU agrees with the counts within tol.

    Used to flag externally reported values that are inconsistent with
    their own TP/FP/FN tallies.
    """
    reported = list(reported)
    if len(reported) != counts.num_classes:
        raise DataError(
            f"expected {counts.num_classes} reported values, got {len(reported)}"
        )
    flags = []
    for c, rep in enumerate(reported):
        computed = iou(int(counts.tp[c]), int(counts.fp[c]), int(counts.fn[c]))
        flags.append(computed is not None and abs(computed - rep) <= tol)
    return flags


@dataclass
class FpsResult:
    images_processed: int
    wall_seconds: float
    fps: float
    warmup_iters: int
    machine: str

    def to_dict(self) -> dict:
        return {
            "images_processed": self.images_processed,
            "wall_seconds": self.wall_seconds,
            "fps": self.fps,
            "warmup_iters": self.warmup_iters,
            "machine": self.machine,
        }


def _machine_info() -> str:
    return (f"{platform.system()} {platform.machine()}, "
            f"Python {platform.python_version()}")


def fps_benchmark(net, images, warmup: int = 10, repeats: int = 3) -> FpsResult:
    """Latency-style throughput: warmup untimed, then time full passes.

    Runs `warmup` untimed single-image predictions, then `repeats` timed
    passes over the whole image list (batch size 1, monotonic clock).
    fps = images processed / wall seconds. The result records the machine
    since throughput numbers are hardware-bound.
    """
    from .network import predict  # deferred to avoid a module cycle

    images = list(images)
    if not images:
        raise DataError("benchmark needs at least one image")
    if repeats < 1:
        raise ParameterError(f"repeats must be >= 1, got {repeats}")
    if warmup < 0:
        raise ParameterError(f"warmup must be >= 0, got {warmup}")
    sizes = {img.shape for img in images}
    if len(sizes) != 1:
        raise DataError(f"benchmark images must share one size, got {sorted(sizes)}")

    for i in range(warmup):
        predict(net, images[i % len(images)])
    t0 = time.perf_counter()
    for _ in range(repeats):
        for img in images:
            predict(net, img)
    wall = max(time.perf_counter() - t0, 1e-9)
    processed = repeats * len(images)
    return FpsResult(images_processed=processed, wall_seconds=wall,
                     fps=processed / wall, warmup_iters=warmup,
                     machine=_machine_info())


def _fmt(value) -> str:
    return "absent" if value is None else f"{value:.4f}"


def _class_rows(report: IouReport, counts: ConfusionCounts, class_names=None):
    rows = []
    for c in range(counts.num_classes):
        name = class_names[c] if class_names else f"class_{c + 1:02d}"
        rows.append([c, name, int(counts.tp[c]), int(counts.fp[c]),
                     int(counts.fn[c]), report.per_class[c]])
    return rows


def format_class_table(report: IouReport, counts: ConfusionCounts,
                       class_names=None) -> str:
    """Aligned per-class table for stdout."""
    header = ["class", "name", "tp", "fp", "fn", "iou"]
    rows = [[str(c), name, str(tp), str(fp), str(fn), _fmt(v)]
            for c, name, tp, fp, fn, v in _class_rows(report, counts, class_names)]
    rows.append(["", "mean_iou", "", "", "", f"{report.mean_iou:.4f}"])
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(6)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(6)))
    return "\n".join(lines)


def write_report(path, report: IouReport, counts: ConfusionCounts,
                 class_names=None, fps: FpsResult | None = None,
                 param_millions: float | None = None, fmt: str | None = None) -> None:
    """Evaluation report: per-class rows plus summary rows.

    CSV columns are class,name,tp,fp,fn,iou; summary rows carry their key
    in the class column and their value in the iou column. JSON mirrors
    the same fields. Floats are printed with 4 decimals.
    """
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    rows = _class_rows(report, counts, class_names)
    if fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["class", "name", "tp", "fp", "fn", "iou"])
            for c, name, tp, fp, fn, value in rows:
                writer.writerow([c, name, tp, fp, fn, _fmt(value)])
            writer.writerow(["mean_iou", "", "", "", "", f"{report.mean_iou:.4f}"])
            if fps is not None:
                writer.writerow(["fps", "", "", "", "", f"{fps.fps:.4f}"])
            if param_millions is not None:
                writer.writerow(["param_millions", "", "", "", "",
                                 f"{param_millions:.4f}"])
    elif fmt == "json":
        doc = {
            "classes": [
                {"class": c, "name": name, "tp": tp, "fp": fp, "fn": fn,
                 "iou": None if value is None else round(value, 4)}
                for c, name, tp, fp, fn, value in rows
            ],
            "mean_iou": round(report.mean_iou, 4),
            "classes_counted": report.classes_counted,
        }
        if fps is not None:
            doc["fps"] = round(fps.fps, 4)
        if param_millions is not None:
            doc["param_millions"] = round(param_millions, 4)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    else:
        raise ParameterError(f"unknown report format {fmt!r}, expected csv or json")


def read_report(path, fmt: str | None = None) -> dict:
    """Parse a write_report file back into {classes, mean_iou, fps, ...}."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    if fmt == "json":
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    doc = {"classes": []}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != ["class", "name", "tp", "fp", "fn", "iou"]:
            raise DataError(f"{path}: unexpected report header {header}")
        for row in reader:
            if row[0] in ("mean_iou", "fps", "param_millions"):
                doc[row[0]] = float(row[5])
            else:
                doc["classes"].append({
                    "class": int(row[0]), "name": row[1], "tp": int(row[2]),
                    "fp": int(row[3]), "fn": int(row[4]),
                    "iou": None if row[5] == "absent" else float(row[5]),
                })
    return doc


def write_fps_report(path, result: FpsResult, fmt: str | None = None) -> None:
    """Benchmark report: the FpsResult fields as JSON or key,value CSV."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    doc = result.to_dict()
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2)
            f.write("\n")
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["key", "value"])
            for key, value in doc.items():
                writer.writerow([key, value])
    else:
        raise ParameterError(f"unknown report format {fmt!r}, expected csv or json")


def write_iou_comparison(path, counts: ConfusionCounts, reported,
                         tol: float = 0.05, class_names=None) -> None:
    """CSV comparing recomputed IOUs against reported ones, flagging rows
    whose reported value disagrees with its own counts beyond tol."""
    flags = check_reported_ious(counts, reported, tol)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "name", "tp", "fp", "fn",
                         "iou", "reported_iou", "consistent"])
        for c in range(counts.num_classes):
            name = class_names[c] if class_names else f"class_{c + 1:02d}"
            value = iou(int(counts.tp[c]), int(counts.fp[c]), int(counts.fn[c]))
            writer.writerow([c, name, int(counts.tp[c]), int(counts.fp[c]),
                             int(counts.fn[c]), _fmt(value),
                             f"{reported[c]:.4f}", str(flags[c]).lower()])
