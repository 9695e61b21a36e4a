"""Binary classification metrics: confusion matrices, ROC / AUC, bootstrap CIs.

All the estimators here are exact small-sample computations, not streaming
approximations. The ROC sweep enumerates every distinct score as a threshold,
AUC is the trapezoidal integral of that curve (numerically identical to the
Mann-Whitney pair statistic), and confidence intervals come from a percentile
bootstrap whose per-resample RNG streams are independently seeded so the
estimate does not depend on how the work is ordered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .rng import make_rng

# A bootstrap that keeps hitting single-class resamples gives up after this
# many multiples of n_resamples total draws rather than spinning forever.
_DRAW_CAP_FACTOR = 100


class BootstrapError(RuntimeError):
    """Resampling could not produce enough two-class resamples."""


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        for name in ("tp", "fp", "tn", "fn"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
        if self.total < 1:
            raise ValueError("confusion matrix must count at least one example")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class MetricSet(NamedTuple):
    precision: float
    recall: float
    f1: float
    accuracy: float


def confusion_matrix(predictions, labels) -> ConfusionMatrix:
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.shape != lab.shape or pred.ndim != 1:
        raise ValueError("predictions and labels must be 1D and the same length")
    if pred.shape[0] == 0:
        raise ValueError("cannot build a confusion matrix from zero examples")
    for arr, what in ((pred, "predictions"), (lab, "labels")):
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{what} must contain only 0 and 1")
    return ConfusionMatrix(
        tp=int(((pred == 1) & (lab == 1)).sum()),
        fp=int(((pred == 1) & (lab == 0)).sum()),
        tn=int(((pred == 0) & (lab == 0)).sum()),
        fn=int(((pred == 0) & (lab == 1)).sum()),
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def compute_metrics(cm: ConfusionMatrix) -> MetricSet:
    """Precision, recall, F1 and accuracy; any 0/0 is reported as 0.0.

    The zero-denominator cases are also surfaced by name through
    :func:`zero_denominator_flags` so callers can tell "silent zero" apart
    from a genuinely zero rate.
    """
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = _ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn)
    accuracy = _ratio(cm.tp + cm.tn, cm.total)
    return MetricSet(precision, recall, f1, accuracy)


def zero_denominator_flags(cm: ConfusionMatrix) -> list[str]:
    """Names of the metrics whose denominator was zero, in a fixed order."""
    flags = []
    if cm.tp + cm.fp == 0:
        flags.append("precision_zero_denominator")
    if cm.tp + cm.fn == 0:
        flags.append("recall_zero_denominator")
    if 2 * cm.tp + cm.fp + cm.fn == 0:
        flags.append("f1_zero_denominator")
    return flags


@dataclass(frozen=True)
class RocCurve:
    """Operating points (fpr, tpr) with the thresholds that produced them.

    points[i] is the curve at thresholds[i]; the first threshold is +inf so
    the curve starts at (0, 0), and both coordinates are non-decreasing.
    """

    points: np.ndarray      # (m, 2) columns fpr, tpr
    thresholds: np.ndarray  # (m,)

    def __post_init__(self):
        pts, thr = self.points, self.thresholds
        if pts.ndim != 2 or pts.shape[1] != 2 or thr.shape != (pts.shape[0],):
            raise ValueError("points must be (m, 2) with m matching thresholds")
        if pts.shape[0] < 2:
            raise ValueError("a ROC curve needs at least two points")
        if not math.isinf(thr[0]) or pts[0, 0] != 0.0 or pts[0, 1] != 0.0:
            raise ValueError("curve must start at (0, 0) with threshold +inf")
        if pts[-1, 0] != 1.0 or pts[-1, 1] != 1.0:
            raise ValueError("curve must end at (1, 1)")
        if (np.diff(pts, axis=0) < 0).any():
            raise ValueError("fpr and tpr must be non-decreasing")


def _sweep(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """ROC points and thresholds for a two-class sample.

    Classify positive where score >= t, for t over the distinct scores in
    descending order. Ties share one threshold, hence one operating point.
    """
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    pos = int(y.sum())
    neg = y.shape[0] - pos
    # Last index of each run of equal scores marks one distinct threshold.
    last = np.nonzero(np.r_[s[1:] != s[:-1], True])[0]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    points = np.empty((last.shape[0] + 1, 2), dtype=np.float64)
    points[0] = (0.0, 0.0)
    points[1:, 0] = fps / neg
    points[1:, 1] = tps / pos
    thresholds = np.r_[np.inf, s[last]]
    return points, thresholds


def roc_curve(scores, labels) -> RocCurve:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1 or s.shape[0] == 0:
        raise ValueError("scores and labels must be 1D, non-empty, equal length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must contain only 0 and 1")
    if y.min() == y.max():
        raise ValueError("AUC undefined for one-class sample")
    points, thresholds = _sweep(s, y.astype(np.int64))
    return RocCurve(points, thresholds)


def auc(curve: RocCurve) -> float:
    """Area under the curve by the trapezoidal rule."""
    return float(np.trapezoid(curve.points[:, 1], curve.points[:, 0]))


def roc_auc(scores, labels) -> tuple[RocCurve, float]:
    curve = roc_curve(scores, labels)
    return curve, auc(curve)


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    level: float
    n_resamples: int
    seed: int

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise ValueError(f"level must be in (0, 1), got {self.level}")
        if self.low > self.high:
            raise ValueError(f"interval bounds out of order: {self.low} > {self.high}")
        if self.n_resamples < 1:
            raise ValueError("n_resamples must be positive")


def bootstrap_auc_ci(
    scores,
    labels,
    n_resamples: int = 10000,
    level: float = 0.95,
    seed: int = 42,
) -> ConfidenceInterval:
    """Percentile bootstrap interval for AUC.

    Resample r draws its indices from an RNG seeded by (seed, r), so the
    result is invariant to evaluation order and any resample can be
    regenerated in isolation. A resample that comes out single-class (AUC
    undefined) is redrawn from the same stream; if the total number of draws
    across the run exceeds _DRAW_CAP_FACTOR * n_resamples the sample is
    declared too degenerate and BootstrapError is raised.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1 or s.shape[0] == 0:
        raise ValueError("scores and labels must be 1D, non-empty, equal length")
    if y.min() == y.max():
        raise ValueError("AUC undefined for one-class sample")
    if n_resamples < 1:
        raise ValueError("n_resamples must be positive")
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    n = s.shape[0]
    cap = _DRAW_CAP_FACTOR * n_resamples
    draws = 0
    aucs = np.empty(n_resamples, dtype=np.float64)
    for r in range(n_resamples):
        rng = make_rng((seed, r))
        while True:
            draws += 1
            if draws > cap:
                raise BootstrapError(
                    f"exceeded {cap} resampling draws without {n_resamples} "
                    "two-class resamples; sample is too close to single-class"
                )
            idx = rng.integers(0, n, size=n)
            yr = y[idx]
            if yr.min() != yr.max():
                break
        points, _ = _sweep(s[idx], yr)
        aucs[r] = np.trapezoid(points[:, 1], points[:, 0])
    alpha = 1.0 - level
    low, high = np.quantile(aucs, (alpha / 2, 1 - alpha / 2), method="linear")
    return ConfidenceInterval(float(low), float(high), level, n_resamples, seed)


def roc_to_csv(curve: RocCurve) -> str:
    """CSV form of the curve, one `threshold,fpr,tpr` row per point.

    Values use the shortest round-tripping decimal form, so the text is
    bit-stable and parses back to the exact floats.
    """
    lines = ["threshold,fpr,tpr"]
    for (fpr, tpr), t in zip(curve.points, curve.thresholds):
        lines.append(f"{float(t)!r},{float(fpr)!r},{float(tpr)!r}")
    return "\n".join(lines) + "\n"
