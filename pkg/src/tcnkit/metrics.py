"""Per-expression Pearson correlation, its two-level average, and the
weighted-average prediction ensemble.

The correlation of a (video, expression) pair is undefined whenever
either series is constant. Such cells contribute zero to the inner mean
while the expression count stays fixed, and every report carries the
number of cells this rule touched so the convention is auditable.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ConfigError, ShapeError, ValidationError

RHO_OVERSHOOT = 1e-12  # floating slack before clamping to [-1, 1]


@dataclass(eq=False)
class PredictionMatrix:
    """Scores for one video, aligned row-for-row with its ground truth."""

    video_id: str
    values: np.ndarray  # T x C
    timestamp_indices: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.timestamp_indices = np.asarray(self.timestamp_indices, dtype=np.int64)
        if self.values.ndim != 2:
            raise ValidationError(f"{self.video_id}: prediction values must be 2-D")
        if len(self.timestamp_indices) != self.values.shape[0]:
            raise ValidationError(f"{self.video_id}: timestamps do not match rows")


@dataclass(eq=False)
class EvaluationReport:
    per_video: dict  # video_id -> list of rho or None
    m_rho: float
    undefined_count: int

    def lines(self):
        out = []
        for video_id, rhos in self.per_video.items():
            defined = [r for r in rhos if r is not None]
            mean = sum(defined) / len(rhos) if rhos else 0.0
            out.append(
                f"{video_id} mean_rho={mean:.6f} "
                f"undefined={len(rhos) - len(defined)}"
            )
        out.append(f"M_rho={self.m_rho:.6f} undefined={self.undefined_count}")
        return out


def pearson_rho(y, yhat):
    """Pearson correlation of two series, or None when undefined.

    Two-pass (mean then center) in float64. Constancy is decided by exact
    value comparison, not by a variance threshold: the mean of a constant
    float vector need not round back to that constant.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yhat = np.asarray(yhat, dtype=np.float64).reshape(-1)
    if y.shape != yhat.shape:
        raise ShapeError(f"series lengths differ: {y.shape[0]} vs {yhat.shape[0]}")
    if y.shape[0] < 2:
        raise ValidationError("correlation needs at least two samples")
    if np.all(y == y[0]) or np.all(yhat == yhat[0]):
        return None
    yc = y - y.mean()
    pc = yhat - yhat.mean()
    denom = np.sqrt((yc * yc).sum() * (pc * pc).sum())
    rho = float((yc * pc).sum() / denom)
    # two-pass float64 keeps any overshoot below RHO_OVERSHOOT; clamp it away
    if abs(rho) > 1.0:
        rho = max(-1.0, min(1.0, rho))
    return rho


def sequence_rhos(labels, predictions):
    """Column-wise correlations for one video."""
    labels = np.asarray(labels)
    predictions = np.asarray(predictions)
    if labels.shape != predictions.shape:
        raise ShapeError(
            f"label shape {labels.shape} != prediction shape {predictions.shape}"
        )
    return [pearson_rho(labels[:, c], predictions[:, c]) for c in range(labels.shape[1])]


def m_rho(per_video_rhos):
    """Mean over videos of the mean over expressions.

    Undefined cells count as zero correlation while the per-video divisor
    stays at the full expression count. Returns (value, undefined_count).
    """
    rows = list(per_video_rhos)
    if not rows:
        raise ValidationError("m_rho needs at least one video")
    undefined = 0
    video_means = []
    for rhos in rows:
        if not rhos:
            raise ValidationError("a video must score at least one expression")
        total = 0.0
        for rho in rhos:
            if rho is None:
                undefined += 1
            else:
                total += rho
        video_means.append(total / len(rhos))
    return float(np.mean(video_means)), undefined


def evaluate(dataset, predictions):
    """Score a prediction set against a labeled dataset."""
    by_id = {}
    for pred in predictions:
        if pred.video_id in by_id:
            raise ValidationError(f"duplicate prediction for {pred.video_id}")
        by_id[pred.video_id] = pred

    per_video = {}
    for seq in dataset:
        if seq.labels is None:
            raise ValidationError(f"{seq.video_id}: no labels to evaluate against")
        pred = by_id.get(seq.video_id)
        if pred is None:
            raise AlignmentError(f"missing prediction for video {seq.video_id}")
        if pred.values.shape[0] != len(seq):
            raise AlignmentError(
                f"{seq.video_id}: prediction has {pred.values.shape[0]} rows, "
                f"ground truth has {len(seq)}"
            )
        if pred.values.shape[1] != seq.labels.shape[1]:
            raise AlignmentError(
                f"{seq.video_id}: prediction width {pred.values.shape[1]} != "
                f"label width {seq.labels.shape[1]}"
            )
        if not np.array_equal(pred.timestamp_indices, seq.timestamp_indices):
            raise AlignmentError(f"{seq.video_id}: timestamp indices do not line up")
        per_video[seq.video_id] = sequence_rhos(seq.labels, pred.values)

    value, undefined = m_rho(per_video.values())
    return EvaluationReport(per_video=per_video, m_rho=value, undefined_count=undefined)


def ensemble(first, second, weight):
    """Elementwise convex combination of two prediction sets:
    weight * first + (1 - weight) * second, matched by video id.

    The endpoints copy the corresponding input exactly rather than going
    through the arithmetic, so weight 0 and 1 are reproductions."""
    if not 0.0 <= weight <= 1.0:
        raise ConfigError(f"ensemble weight must be in [0, 1], got {weight}")
    second_by_id = {p.video_id: p for p in second}
    missing = [p.video_id for p in first if p.video_id not in second_by_id]
    extra = sorted(set(second_by_id) - {p.video_id for p in first})
    if missing or extra:
        raise AlignmentError(
            f"prediction sets do not cover the same videos "
            f"(missing {missing}, extra {extra})"
        )
    combined = []
    for a in first:
        b = second_by_id[a.video_id]
        if a.values.shape != b.values.shape:
            raise AlignmentError(
                f"{a.video_id}: shapes {a.values.shape} vs {b.values.shape} differ"
            )
        if not np.array_equal(a.timestamp_indices, b.timestamp_indices):
            raise AlignmentError(f"{a.video_id}: timestamp indices differ")
        if weight == 1.0:
            values = a.values.copy()
        elif weight == 0.0:
            values = b.values.copy()
        else:
            values = weight * a.values.astype(np.float64) + (1.0 - weight) * b.values.astype(np.float64)
        combined.append(
            PredictionMatrix(
                video_id=a.video_id,
                values=values,
                timestamp_indices=a.timestamp_indices.copy(),
            )
        )
    return combined
