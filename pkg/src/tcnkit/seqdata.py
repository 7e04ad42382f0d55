"""Sequence data model, FSEQ1 binary container, positional encoding and
the synthetic dataset generator.

FSEQ1 layout (little-endian):
    magic "FSEQ1" | version 0x01 | u32 T | u32 D | u32 C | u8 has_labels
    T x u64 timestamp indices
    T x D f32 features, row-major
    T x C f32 labels, row-major (only when has_labels == 1)
    T x u8 annotated mask (0 or 1)
Any trailing bytes make the file corrupt. Feature files carry ground
truth labels (validated to [0, 1]); the same container transports model
predictions, which are unbounded, via the low-level read/write helpers.
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, CorruptFileError, FormatError, ValidationError

MAGIC = b"FSEQ1"
VERSION = 1
HEADER = struct.Struct("<5sBIIIB")

DEFAULT_EXPRESSIONS = 15
SPLITS = ("train", "validation", "test")


@dataclass
class PositionalEncodingConfig:
    dim: int = 16
    base: float = 10000.0
    enabled: bool = True

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 2 != 0:
            raise ConfigError(f"encoding dim must be a positive even integer, got {self.dim}")
        if self.base <= 1.0:
            raise ConfigError(f"encoding base must exceed 1, got {self.base}")


@dataclass(eq=False)
class FeatureSequence:
    """One video's per-timestamp features, labels and original frame indices."""

    video_id: str
    timestamp_indices: np.ndarray  # T, original frame index
    features: np.ndarray  # T x D
    labels: np.ndarray | None = None  # T x C, entries in [0, 1]
    annotated_mask: np.ndarray | None = None  # T, defaults to all-true
    label_dim: int | None = None

    def __post_init__(self):
        self.timestamp_indices = np.asarray(self.timestamp_indices, dtype=np.int64)
        self.features = _as_float_matrix(self.features, "features")
        if self.timestamp_indices.ndim != 1:
            raise ValidationError("timestamp_indices must be one-dimensional")
        t = len(self.timestamp_indices)
        if self.features.shape[0] != t:
            raise ValidationError(
                f"features have {self.features.shape[0]} rows but "
                f"{t} timestamps ({self.video_id})"
            )
        if t and self.timestamp_indices[0] < 0:
            raise ValidationError("timestamp indices must be non-negative")
        if t > 1 and np.any(np.diff(self.timestamp_indices) <= 0):
            raise ValidationError("timestamp indices must be strictly increasing")
        if self.labels is not None:
            self.labels = _as_float_matrix(self.labels, "labels")
            if self.labels.shape[0] != t:
                raise ValidationError(
                    f"labels have {self.labels.shape[0]} rows but {t} timestamps"
                )
            _check_unit_range(self.labels, self.video_id)
            if self.label_dim is None:
                self.label_dim = self.labels.shape[1]
            elif self.label_dim != self.labels.shape[1]:
                raise ValidationError(
                    f"label_dim {self.label_dim} != label width {self.labels.shape[1]}"
                )
        elif self.label_dim is None:
            self.label_dim = 0
        if self.annotated_mask is None:
            self.annotated_mask = np.ones(t, dtype=bool)
        else:
            self.annotated_mask = np.asarray(self.annotated_mask, dtype=bool)
            if self.annotated_mask.shape != (t,):
                raise ValidationError("annotated_mask length must match timestamps")

    def __len__(self):
        return len(self.timestamp_indices)

    @property
    def feature_dim(self):
        return self.features.shape[1]


@dataclass(eq=False)
class Dataset:
    sequences: list
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ConfigError(f"split must be one of {SPLITS}, got {self.split!r}")
        ids = [s.video_id for s in self.sequences]
        if len(set(ids)) != len(ids):
            dupes = sorted({v for v in ids if ids.count(v) > 1})
            raise ValidationError(f"duplicate video ids in split: {dupes}")

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)


def _as_float_matrix(values, what):
    arr = np.asarray(values)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float32)
    if arr.ndim != 2:
        raise ValidationError(f"{what} must be a 2-D matrix, got shape {arr.shape}")
    return arr


def _check_unit_range(labels, video_id):
    bad = (labels < 0.0) | (labels > 1.0)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ValidationError(
            f"label at row {row}, column {col} is {labels[row, col]!r}, "
            f"outside [0, 1] ({video_id})"
        )


# ---------------------------------------------------------------------------
# FSEQ1 container


def write_fseq(path, timestamp_indices, features, labels, mask, label_dim=None):
    """Low-level writer; labels may be None or any real matrix (predictions)."""
    timestamps = np.asarray(timestamp_indices, dtype=np.int64)
    features = np.asarray(features)
    t, d = features.shape
    has_labels = labels is not None
    c = labels.shape[1] if has_labels else int(label_dim or 0)
    blob = bytearray()
    blob += HEADER.pack(MAGIC, VERSION, t, d, c, int(has_labels))
    blob += timestamps.astype("<u8").tobytes()
    blob += np.ascontiguousarray(features, dtype="<f4").tobytes()
    if has_labels:
        blob += np.ascontiguousarray(labels, dtype="<f4").tobytes()
    blob += np.asarray(mask, dtype=bool).astype("<u1").tobytes()
    Path(path).write_bytes(bytes(blob))


def read_fseq(path):
    """Low-level reader; returns (timestamps, features, labels|None, mask, c)."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 1 or data[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: missing FSEQ1 magic")
    if len(data) < HEADER.size:
        raise FormatError(f"{path}: truncated header")
    _, version, t, d, c, has_labels = HEADER.unpack_from(data)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if has_labels not in (0, 1):
        raise FormatError(f"{path}: has_labels byte must be 0 or 1, got {has_labels}")

    n_ts = t * 8
    n_feat = t * d * 4
    n_lab = t * c * 4 if has_labels else 0
    expected = HEADER.size + n_ts + n_feat + n_lab + t
    if len(data) < expected:
        raise CorruptFileError(
            f"{path}: payload truncated ({len(data)} bytes, expected {expected})"
        )
    if len(data) > expected:
        raise CorruptFileError(
            f"{path}: {len(data) - expected} trailing bytes after payload"
        )

    offset = HEADER.size
    raw_ts = np.frombuffer(data, dtype="<u8", count=t, offset=offset)
    if t and raw_ts.max() > np.iinfo(np.int64).max:
        raise CorruptFileError(f"{path}: timestamp index overflows signed 64-bit")
    timestamps = raw_ts.astype(np.int64)
    offset += n_ts
    features = (
        np.frombuffer(data, dtype="<f4", count=t * d, offset=offset)
        .reshape(t, d)
        .astype(np.float32)
    )
    offset += n_feat
    labels = None
    if has_labels:
        labels = (
            np.frombuffer(data, dtype="<f4", count=t * c, offset=offset)
            .reshape(t, c)
            .astype(np.float32)
        )
        offset += n_lab
    raw_mask = np.frombuffer(data, dtype="<u1", count=t, offset=offset)
    if np.any(raw_mask > 1):
        raise CorruptFileError(f"{path}: mask bytes must be 0 or 1")
    mask = raw_mask.astype(bool)
    return timestamps, features, labels, mask, c


def load_feature_file(path, video_id=None):
    """Read one FSEQ1 feature file into a validated FeatureSequence."""
    timestamps, features, labels, mask, c = read_fseq(path)
    if labels is not None:
        _check_unit_range(labels, str(path))
    return FeatureSequence(
        video_id=video_id if video_id is not None else Path(path).stem,
        timestamp_indices=timestamps,
        features=features,
        labels=labels,
        annotated_mask=mask,
        label_dim=c,
    )


def save_feature_file(seq, path):
    write_fseq(
        path,
        seq.timestamp_indices,
        seq.features,
        seq.labels,
        seq.annotated_mask,
        label_dim=seq.label_dim,
    )


# ---------------------------------------------------------------------------
# Missing-timestamp handling and positional encoding


def drop_unannotated(seq):
    """Remove rows with no annotation, keeping original timestamp indices.

    The surviving indices are what positional encoding consumes, so gaps
    stay visible to the model. Idempotent; may return an empty sequence.
    """
    keep = seq.annotated_mask
    return FeatureSequence(
        video_id=seq.video_id,
        timestamp_indices=seq.timestamp_indices[keep],
        features=seq.features[keep],
        labels=None if seq.labels is None else seq.labels[keep],
        annotated_mask=np.ones(int(keep.sum()), dtype=bool),
        label_dim=seq.label_dim,
    )


def positional_encode(t, cfg):
    """Sinusoidal encoding of one timestamp index.

    pe[2m] = sin(t / base^(2m/dim)), pe[2m+1] = cos(t / base^(2m/dim)).
    """
    if cfg.dim <= 0 or cfg.dim % 2 != 0:
        raise ConfigError(f"encoding dim must be a positive even integer, got {cfg.dim}")
    if t < 0:
        raise ValidationError(f"timestamp index must be non-negative, got {t}")
    return _encoding_matrix(np.asarray([t], dtype=np.int64), cfg)[0]


def _encoding_matrix(timestamps, cfg):
    half = np.arange(cfg.dim // 2, dtype=np.float64)
    divisor = np.power(float(cfg.base), 2.0 * half / cfg.dim)
    angles = timestamps.astype(np.float64)[:, None] / divisor[None, :]
    pe = np.empty((len(timestamps), cfg.dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


def concat_positional(seq, cfg):
    """Append the positional encoding of each original timestamp index to
    the feature rows. Disabled config returns the input unchanged."""
    if not cfg.enabled:
        return seq
    if len(seq) == 0:
        raise ValidationError(f"cannot encode an empty sequence ({seq.video_id})")
    pe = _encoding_matrix(seq.timestamp_indices, cfg).astype(seq.features.dtype)
    return FeatureSequence(
        video_id=seq.video_id,
        timestamp_indices=seq.timestamp_indices,
        features=np.concatenate([seq.features, pe], axis=1),
        labels=seq.labels,
        annotated_mask=seq.annotated_mask,
        label_dim=seq.label_dim,
    )


# ---------------------------------------------------------------------------
# Synthetic data

_AR_COEFF = 0.9  # feature smoothness; higher = longer correlation length
_AVG_WINDOW = 4  # causal moving-average window in original timesteps
_FEATURE_GAIN = 0.55
_WAVE_GAIN = 0.16
_PERIOD_RANGE = (36.0, 80.0)


def generate_synthetic(seed, n_videos, t_range, feature_dim, label_dim, gap_prob, split="train"):
    """Deterministic synthetic dataset with a learnable causal signal.

    Labels mix a clipped causal moving average of a fixed projection of
    the (smooth) features with a slow wave in original-timestamp space.
    Rows lose their annotation independently with probability gap_prob;
    recovering the wave phase after dropped rows requires knowing the
    original index, which is exactly what positional encoding supplies.
    """
    lo, hi = int(t_range[0]), int(t_range[1])
    if n_videos < 1:
        raise ConfigError(f"n_videos must be >= 1, got {n_videos}")
    if lo < 1 or hi < lo:
        raise ConfigError(f"degenerate length range ({lo}, {hi})")
    if feature_dim < 1 or label_dim < 1:
        raise ConfigError("feature_dim and label_dim must be >= 1")
    if not 0.0 <= gap_prob < 1.0:
        raise ConfigError(f"gap_prob must be in [0, 1), got {gap_prob}")

    shared = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    projection = shared.normal(size=(feature_dim, label_dim))
    projection /= np.linalg.norm(projection, axis=0, keepdims=True)
    periods = shared.uniform(*_PERIOD_RANGE, size=label_dim)
    phases = shared.uniform(0.0, 2.0 * math.pi, size=label_dim)

    sequences = []
    for v in range(n_videos):
        gen = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(v + 1,)))
        t = int(gen.integers(lo, hi + 1))
        feats = _smooth_features(gen, t, feature_dim)
        projected = feats @ projection
        driven = _causal_moving_average(projected, _AVG_WINDOW)
        ticks = np.arange(t, dtype=np.float64)
        wave = np.sin(2.0 * math.pi * ticks[:, None] / periods[None, :] + phases[None, :])
        labels = np.clip(0.5 + _FEATURE_GAIN * driven + _WAVE_GAIN * wave, 0.0, 1.0)

        mask = gen.random(t) >= gap_prob
        if mask.sum() < 2:  # keep every sequence scoreable
            mask[:2] = True
        sequences.append(
            FeatureSequence(
                video_id=f"vid{v:04d}",
                timestamp_indices=np.arange(t, dtype=np.int64),
                features=feats.astype(np.float32),
                labels=labels.astype(np.float32).clip(0.0, 1.0),
                annotated_mask=mask,
            )
        )
    return Dataset(sequences=sequences, split=split)


def _smooth_features(gen, t, dim):
    noise = gen.normal(size=(t, dim))
    out = np.empty((t, dim))
    stationary_sd = math.sqrt((1.0 - _AR_COEFF) / (1.0 + _AR_COEFF))
    out[0] = noise[0] * stationary_sd
    for s in range(1, t):
        out[s] = _AR_COEFF * out[s - 1] + (1.0 - _AR_COEFF) * noise[s]
    return out


def _causal_moving_average(values, window):
    out = np.empty_like(values)
    cumsum = np.cumsum(values, axis=0)
    for s in range(len(values)):
        start = max(0, s - window + 1)
        total = cumsum[s] - (cumsum[start - 1] if start > 0 else 0.0)
        out[s] = total / (s - start + 1)
    return out
