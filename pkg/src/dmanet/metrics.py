"""Segmentation quality metrics built on an integer confusion matrix.

The matrix is indexed ``[reference class, predicted class]``. Pixels whose
reference label equals the ignore id never enter the matrix. Classes absent
from both the references and the predictions have an undefined IoU, reported
as NaN and excluded from the mean.
"""

from __future__ import annotations

import numpy as np

from .config import IGNORE_ID
from .errors import ShapeError


class ConfusionMatrix:
    def __init__(self, num_classes: int, ignore_id: int = IGNORE_ID):
        if num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {num_classes}")
        self.num_classes = num_classes
        self.ignore_id = ignore_id
        self.matrix = np.zeros((num_classes, num_classes), dtype=np.int64)

    def reset(self) -> None:
        self.matrix[:] = 0

    def update(self, prediction: np.ndarray, reference: np.ndarray) -> None:
        """Accumulate one prediction/reference pair (any matching shapes)."""
        prediction = np.asarray(prediction)
        reference = np.asarray(reference)
        if prediction.shape != reference.shape:
            raise ShapeError(
                f"prediction {prediction.shape} and reference "
                f"{reference.shape} shapes differ"
            )
        valid = reference != self.ignore_id
        pred = prediction[valid].astype(np.int64)
        ref = reference[valid].astype(np.int64)
        for name, values in (("prediction", pred), ("reference", ref)):
            if values.size and (values.min() < 0 or values.max() >= self.num_classes):
                bad = values[(values < 0) | (values >= self.num_classes)][0]
                raise ValueError(
                    f"{name} contains class id {bad} outside "
                    f"[0, {self.num_classes})"
                )
        counts = np.bincount(ref * self.num_classes + pred,
                             minlength=self.num_classes ** 2)
        self.matrix += counts.reshape(self.num_classes, self.num_classes)

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Fold another matrix (e.g. from a parallel shard) into this one."""
        if other.num_classes != self.num_classes:
            raise ValueError(
                f"cannot merge {other.num_classes}-class matrix into "
                f"{self.num_classes}-class matrix"
            )
        self.matrix += other.matrix
        return self

    def pixel_accuracy(self) -> float:
        total = self.matrix.sum()
        if total == 0:
            return float("nan")
        return float(np.diag(self.matrix).sum() / total)

    def iou_per_class(self) -> np.ndarray:
        """Intersection over union per class; NaN where the class never
        occurs in either role."""
        intersection = np.diag(self.matrix).astype(np.float64)
        union = (self.matrix.sum(axis=1) + self.matrix.sum(axis=0)
                 - np.diag(self.matrix)).astype(np.float64)
        with np.errstate(invalid="ignore"):
            return np.where(union > 0, intersection / np.where(union > 0, union, 1),
                            np.nan)

    def mean_iou(self) -> float:
        per_class = self.iou_per_class()
        defined = per_class[~np.isnan(per_class)]
        if defined.size == 0:
            return float("nan")
        return float(defined.mean())

    def report(self, class_names: list[str] | None = None) -> str:
        """Human-readable per-class table plus the two summary scores."""
        if class_names is not None and len(class_names) != self.num_classes:
            raise ValueError(
                f"got {len(class_names)} class names for "
                f"{self.num_classes} classes"
            )
        names = class_names or [f"class_{i}" for i in range(self.num_classes)]
        width = max(len(n) for n in names)
        lines = [f"{'class':<{width}}  {'iou':>7}  {'pixels':>10}"]
        per_class = self.iou_per_class()
        pixels = self.matrix.sum(axis=1)
        for name, iou, count in zip(names, per_class, pixels):
            iou_text = "   --- " if np.isnan(iou) else f"{iou:7.4f}"
            lines.append(f"{name:<{width}}  {iou_text}  {count:>10d}")
        lines.append(f"mean IoU       {self.mean_iou():.4f}")
        lines.append(f"pixel accuracy {self.pixel_accuracy():.4f}")
        return "\n".join(lines)
