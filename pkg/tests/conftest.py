import numpy as np
import pytest

from tcnkit import RngState, TcnConfig, build_model


def rel_err(a, b, floor=1e-6):
    """Max elementwise |a-b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max()) if a.size else 0.0


def max_param_rel_err(analytic, numeric, floor=1e-6):
    return max(rel_err(analytic[name], numeric[name], floor) for name in analytic)


@pytest.fixture
def tiny_model():
    cfg = TcnConfig(
        input_dim=3,
        output_dim=2,
        hidden_channels=4,
        num_blocks=2,
        kernel_size=3,
        dropout_rate=0.0,
        head_hidden=4,
    )
    return build_model(cfg, rng=RngState(7), precision="wide")
