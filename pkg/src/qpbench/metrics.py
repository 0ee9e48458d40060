"""Confusion-matrix accuracies and the pixel-weighted running loss."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, ParameterError, UndefinedMetricError


@dataclass
class MetricRecord:
    """One evaluated (epoch, phase) point of a training run."""

    run_id: int
    optimizer: str
    epoch: int
    phase: str  # "train" or "test"
    loss: float
    overall_acc: float
    mean_class_acc: float


class ConfusionMatrix:
    """K x K counts, rows = true class, columns = predicted class.

    If ``background`` is given, pixels whose true class is that index are
    skipped entirely, excluding them from both accuracy measures.
    """

    def __init__(self, num_classes: int, background: int | None = None):
        if num_classes < 1:
            raise ParameterError(f"num_classes must be >= 1, got {num_classes}")
        if background is not None and not 0 <= background < num_classes:
            raise ParameterError(f"background index {background} out of range")
        self.num_classes = num_classes
        self.background = background
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, true_labels, predicted_labels) -> "ConfusionMatrix":
        t = np.asarray(true_labels).ravel()
        p = np.asarray(predicted_labels).ravel()
        if t.shape != p.shape:
            raise DimensionError(
                f"true labels shape {np.shape(true_labels)} != "
                f"predicted shape {np.shape(predicted_labels)}"
            )
        k = self.num_classes
        if t.size and (t.min() < 0 or t.max() >= k or p.min() < 0 or p.max() >= k):
            raise DataError(f"labels must be in [0, {k})")
        if self.background is not None:
            keep = t != self.background
            t, p = t[keep], p[keep]
        self.counts += np.bincount(t * k + p, minlength=k * k).reshape(k, k)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Elementwise sum, for combining parallel evaluation shards."""
        if other.num_classes != self.num_classes:
            raise DimensionError(
                f"cannot merge {other.num_classes}-class into {self.num_classes}-class matrix"
            )
        self.counts += other.counts
        return self

    def total(self) -> int:
        return int(self.counts.sum())

    def overall_accuracy(self) -> float:
        total = self.total()
        if total == 0:
            raise UndefinedMetricError("no pixels accumulated")
        return float(np.trace(self.counts)) / total

    def mean_class_accuracy(self) -> float:
        """Mean per-class recall over classes that actually occur."""
        row_sums = self.counts.sum(axis=1)
        present = row_sums > 0
        if not present.any():
            raise UndefinedMetricError("no pixels accumulated")
        recalls = np.diag(self.counts)[present] / row_sums[present]
        return float(recalls.mean())


class RunningLoss:
    """Pixel-weighted mean of per-pixel losses across adds."""

    def __init__(self):
        self._loss_sum = 0.0
        self._pixels = 0

    def add(self, per_pixel_loss: float, pixel_count: int) -> None:
        if pixel_count <= 0:
            raise ParameterError(f"pixel_count must be > 0, got {pixel_count}")
        self._loss_sum += float(per_pixel_loss) * pixel_count
        self._pixels += pixel_count

    def mean(self) -> float:
        if self._pixels == 0:
            raise UndefinedMetricError("no losses accumulated")
        return self._loss_sum / self._pixels
