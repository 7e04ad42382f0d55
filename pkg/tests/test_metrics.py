"""Correlation metric, two-level averaging, report, and the ensemble."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcnkit import (
    Dataset,
    FeatureSequence,
    PredictionMatrix,
    ensemble,
    evaluate,
    m_rho,
    pearson_rho,
    sequence_rhos,
)
from tcnkit.errors import (
    AlignmentError,
    ConfigError,
    ShapeError,
    ValidationError,
)


def _loop_pearson(y, p):
    """Independent scalar-loop oracle, no numpy vector ops."""
    n = len(y)
    my = sum(y) / n
    mp = sum(p) / n
    cov = sum((a - my) * (b - mp) for a, b in zip(y, p))
    vy = sum((a - my) ** 2 for a in y)
    vp = sum((b - mp) ** 2 for b in p)
    return cov / math.sqrt(vy * vp)


def test_worked_case_is_exact():
    rho = pearson_rho([1, 2, 3, 4], [1, 3, 2, 4])
    assert abs(rho - 0.8) < 1e-12


def test_perfect_and_inverse_correlation():
    x = np.arange(10.0)
    assert pearson_rho(x, 3 * x + 2) == pytest.approx(1.0, abs=1e-12)
    assert pearson_rho(x, -0.5 * x + 7) == pytest.approx(-1.0, abs=1e-12)


def test_rho_never_exceeds_one():
    rng = np.random.default_rng(0)
    for _ in range(300):
        x = rng.normal(size=int(rng.integers(2, 30)))
        if np.all(x == x[0]):
            continue
        a = float(rng.normal()) or 1.0
        rho = pearson_rho(x, a * x + float(rng.normal()))
        assert abs(rho) <= 1.0


@given(
    n=st.integers(3, 40),
    seed=st.integers(0, 2**31),
)
@settings(max_examples=150, deadline=None)
def test_matches_scalar_loop_oracle(n, seed):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=n)
    p = rng.normal(size=n)
    rho = pearson_rho(y, p)
    oracle = _loop_pearson(list(y), list(p))
    assert abs(rho - oracle) / max(abs(rho), abs(oracle), 1e-12) < 1e-12


def test_constant_series_is_undefined():
    assert pearson_rho([2.0, 2.0, 2.0], [1.0, 2.0, 3.0]) is None
    assert pearson_rho([1.0, 2.0, 3.0], [0.5, 0.5, 0.5]) is None
    # constancy by exact equality even for values whose mean rounds oddly
    assert pearson_rho([0.1] * 7, [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]) is None


def test_rho_input_validation():
    with pytest.raises(ShapeError):
        pearson_rho([1, 2, 3], [1, 2])
    with pytest.raises(ValidationError):
        pearson_rho([1.0], [2.0])


def test_sequence_rhos_columnwise():
    labels = np.array([[1.0, 9.0], [2.0, 9.0], [3.0, 9.0], [4.0, 9.0]])
    preds = np.array([[1.0, 1.0], [3.0, 2.0], [2.0, 3.0], [4.0, 4.0]])
    rhos = sequence_rhos(labels, preds)
    assert abs(rhos[0] - 0.8) < 1e-12
    assert rhos[1] is None  # constant label column
    with pytest.raises(ShapeError):
        sequence_rhos(labels, preds[:, :1])


def test_m_rho_undefined_cells_count_zero_with_fixed_divisor():
    value, undefined = m_rho([[0.5, None], [1.0, 0.5]])
    assert value == pytest.approx((0.25 + 0.75) / 2)
    assert undefined == 1


def test_m_rho_validation():
    with pytest.raises(ValidationError):
        m_rho([])
    with pytest.raises(ValidationError):
        m_rho([[]])


def _dataset_and_matching_preds(seed=0, n=3, t=12, c=2):
    rng = np.random.default_rng(seed)
    seqs, preds = [], []
    for v in range(n):
        labels = rng.random((t, c)).astype(np.float32)
        seq = FeatureSequence(
            video_id=f"v{v}",
            timestamp_indices=np.arange(t, dtype=np.int64),
            features=rng.normal(size=(t, 1)).astype(np.float32),
            labels=labels,
        )
        seqs.append(seq)
        preds.append(
            PredictionMatrix(
                video_id=f"v{v}",
                values=labels.copy(),
                timestamp_indices=seq.timestamp_indices.copy(),
            )
        )
    return Dataset(sequences=seqs), preds


def test_evaluate_labels_against_themselves():
    dataset, preds = _dataset_and_matching_preds()
    report = evaluate(dataset, preds)
    assert report.m_rho == pytest.approx(1.0, abs=1e-9)
    assert report.undefined_count == 0
    lines = report.lines()
    assert lines[-1].startswith("M_rho=")
    assert len(lines) == len(dataset) + 1
    assert all(f"v{v} mean_rho=" in lines[v] for v in range(3))


def test_evaluate_alignment_errors_name_the_video():
    dataset, preds = _dataset_and_matching_preds()

    with pytest.raises(AlignmentError, match="v1"):
        evaluate(dataset, [p for p in preds if p.video_id != "v1"])

    short = PredictionMatrix("v2", preds[2].values[:-1], preds[2].timestamp_indices[:-1])
    with pytest.raises(AlignmentError, match="v2"):
        evaluate(dataset, [preds[0], preds[1], short])

    narrow = PredictionMatrix("v0", preds[0].values[:, :1], preds[0].timestamp_indices)
    with pytest.raises(AlignmentError, match="v0"):
        evaluate(dataset, [narrow, preds[1], preds[2]])

    shifted = PredictionMatrix("v0", preds[0].values, preds[0].timestamp_indices + 1)
    with pytest.raises(AlignmentError, match="v0"):
        evaluate(dataset, [shifted, preds[1], preds[2]])

    with pytest.raises(ValidationError, match="duplicate"):
        evaluate(dataset, preds + [preds[0]])


def _pred(video_id, values, ts=None):
    values = np.asarray(values, dtype=np.float64)
    if ts is None:
        ts = np.arange(values.shape[0], dtype=np.int64)
    return PredictionMatrix(video_id=video_id, values=values, timestamp_indices=ts)


def test_ensemble_endpoints_are_exact_copies():
    rng = np.random.default_rng(3)
    a = [_pred("x", rng.random((5, 2))), _pred("y", rng.random((7, 2)))]
    b = [_pred("x", rng.random((5, 2))), _pred("y", rng.random((7, 2)))]
    for out, src in ((ensemble(a, b, 1.0), a), (ensemble(a, b, 0.0), b)):
        for o, s in zip(out, src):
            assert np.array_equal(o.values, s.values)
            assert o.values.tobytes() == s.values.tobytes()


def test_ensemble_worked_value_is_exact_in_wide():
    a = [_pred("x", np.full((4, 3), 0.5))]
    b = [_pred("x", np.full((4, 3), 1.0))]
    out = ensemble(a, b, 0.8)
    assert np.all(out[0].values == 0.6)


def test_ensemble_validation():
    a = [_pred("x", np.zeros((3, 1)))]
    b = [_pred("y", np.zeros((3, 1)))]
    with pytest.raises(AlignmentError):
        ensemble(a, b, 0.5)
    with pytest.raises(ConfigError):
        ensemble(a, a, 1.5)
    mismatched = [_pred("x", np.zeros((4, 1)))]
    with pytest.raises(AlignmentError):
        ensemble(a, mismatched, 0.5)
    shifted = [_pred("x", np.zeros((3, 1)), ts=np.arange(3, dtype=np.int64) + 5)]
    with pytest.raises(AlignmentError):
        ensemble(a, shifted, 0.5)
