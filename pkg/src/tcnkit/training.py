"""SGD training loop with per-video length-normalized MSE and gradient
accumulation over ragged-length sequences.

One optimizer step consumes batch_size videos processed one at a time:
their gradients are summed in the parameter store, never materialized as
a padded batch, and the per-video losses are already divided by sequence
length so long videos do not dominate the objective.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, ShapeError, ValidationError
from .metrics import m_rho, sequence_rhos
from .model import forward_features, model_backward, model_forward
from .nncore import RngState, resolve_dtype


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 5e-3
    batch_size: int = 32
    accumulation: bool = True
    seed: int = 0
    precision: str = "standard"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        resolve_dtype(self.precision)


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    seconds: float
    val_m_rho: float | None = None


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def lines(self):
        out = []
        for r in self.records:
            val = "na" if r.val_m_rho is None else f"{r.val_m_rho:.6f}"
            out.append(
                f"epoch={r.epoch} loss={r.mean_loss:.8f} val_m_rho={val} "
                f"seconds={r.seconds:.3f}"
            )
        return out


def mse_loss(pred, target):
    """Length-normalized squared error for one video.

    loss = sum((pred - target)^2) / (C * T); the returned gradient is the
    exact derivative 2 * (pred - target) / (C * T).
    """
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise ValidationError("cannot score an empty prediction")
    diff = pred - target
    scale = pred.dtype.type(1.0 / pred.size)
    loss = float((diff * diff).sum() * scale)
    return loss, (2.0 * scale) * diff


def batch_loss(videos):
    """Sum (not mean) of per-video losses: each video counts once,
    regardless of its length."""
    if not videos:
        raise ValidationError("batch_loss needs at least one video")
    return float(sum(mse_loss(pred, target)[0] for pred, target in videos))


def sgd_step(store, lr):
    """theta <- theta - lr * grad for every parameter, then zero the grads."""
    for name, slot in store.items():
        if not np.all(np.isfinite(slot.grad)):
            raise DivergenceError(f"non-finite gradient in parameter {name!r}")
        slot.value -= lr * slot.grad
    store.zero_grads()


def train(model, data, cfg, val_data=None):
    """Train in place; returns (model, TrainLog).

    Deterministic in (cfg.seed, data, config): the epoch shuffle and every
    dropout mask are drawn from one counter-based stream, and gradients
    are reduced in a fixed serial order.
    """
    sequences = list(data)
    if not sequences:
        raise ValidationError("training dataset is empty")
    for seq in sequences:
        if seq.labels is None:
            raise ValidationError(f"{seq.video_id}: training sequence has no labels")
        if len(seq) == 0:
            raise ValidationError(f"{seq.video_id}: empty sequence in training data")
        if seq.features.shape[1] != model.config.input_dim:
            raise ShapeError(
                f"{seq.video_id}: feature width {seq.features.shape[1]} != "
                f"model input_dim {model.config.input_dim}"
            )
        if seq.labels.shape[1] != model.config.output_dim:
            raise ShapeError(
                f"{seq.video_id}: label width {seq.labels.shape[1]} != "
                f"model output_dim {model.config.output_dim}"
            )

    rng = RngState(cfg.seed)
    dtype = model.dtype
    per_step = cfg.batch_size if cfg.accumulation else 1
    store = model.parameters
    store.zero_grads()
    log = TrainLog()

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        order = rng.generator().permutation(len(sequences))
        losses = []
        pending = 0
        for j in order:
            seq = sequences[j]
            yhat, tape = forward_features(model, seq.features, training=True, rng=rng)
            loss, grad = mse_loss(yhat, seq.labels.astype(dtype))
            if not np.isfinite(loss):
                raise DivergenceError(f"{seq.video_id}: non-finite training loss")
            model_backward(model, tape, grad)
            losses.append(loss)
            pending += 1
            if pending == per_step:
                sgd_step(store, cfg.learning_rate)
                pending = 0
        if pending:
            sgd_step(store, cfg.learning_rate)

        val = None
        if val_data is not None:
            val = _validation_score(model, val_data)
        log.records.append(
            EpochRecord(
                epoch=epoch,
                mean_loss=float(np.mean(losses)),
                seconds=time.perf_counter() - started,
                val_m_rho=val,
            )
        )
    return model, log


def _validation_score(model, data):
    rows = []
    for seq in data:
        preds = model_forward(model, seq, training=False)
        rows.append(sequence_rhos(seq.labels, preds))
    value, _ = m_rho(rows)
    return value
