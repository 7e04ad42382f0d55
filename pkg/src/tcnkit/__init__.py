"""Temporal convolution toolkit for per-timestamp sequence regression.

Dilated causal convolution stacks with weight normalization, sinusoidal
encoding of original timestamp indices for sequences with missing rows,
hand-rolled backpropagation, correlation-based evaluation, and a binary
container format for feature sequences and predictions.
"""

from .errors import (
    AlignmentError,
    ConfigError,
    CorruptFileError,
    DataError,
    DivergenceError,
    FormatError,
    ShapeError,
    SingularityError,
    TcnkitError,
    ValidationError,
)
from .kernels import BACKEND
from .metrics import (
    EvaluationReport,
    PredictionMatrix,
    ensemble,
    evaluate,
    m_rho,
    pearson_rho,
    sequence_rhos,
)
from .model import (
    TcnConfig,
    TcnModel,
    build_model,
    forward_features,
    load_checkpoint,
    model_backward,
    model_forward,
    receptive_field,
    save_checkpoint,
)
from .nncore import ParameterStore, RngState, finite_diff_grad, resolve_dtype
from .seqdata import (
    Dataset,
    FeatureSequence,
    PositionalEncodingConfig,
    concat_positional,
    drop_unannotated,
    generate_synthetic,
    load_feature_file,
    positional_encode,
    read_fseq,
    save_feature_file,
    write_fseq,
)
from .training import TrainConfig, TrainLog, batch_loss, mse_loss, sgd_step, train

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "BACKEND",
    "ConfigError",
    "CorruptFileError",
    "DataError",
    "Dataset",
    "DivergenceError",
    "EvaluationReport",
    "FeatureSequence",
    "FormatError",
    "ParameterStore",
    "PositionalEncodingConfig",
    "PredictionMatrix",
    "RngState",
    "ShapeError",
    "SingularityError",
    "TcnConfig",
    "TcnModel",
    "TcnkitError",
    "TrainConfig",
    "TrainLog",
    "ValidationError",
    "batch_loss",
    "build_model",
    "concat_positional",
    "drop_unannotated",
    "ensemble",
    "evaluate",
    "finite_diff_grad",
    "forward_features",
    "generate_synthetic",
    "load_checkpoint",
    "load_feature_file",
    "m_rho",
    "model_backward",
    "model_forward",
    "mse_loss",
    "pearson_rho",
    "positional_encode",
    "read_fseq",
    "receptive_field",
    "save_checkpoint",
    "save_feature_file",
    "sequence_rhos",
    "sgd_step",
    "train",
    "write_fseq",
]
