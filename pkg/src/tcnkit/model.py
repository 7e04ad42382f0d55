"""Residual temporal blocks assembled into the full sequence regressor.

A block is two weight-normalized dilated causal convs, each followed by
ReLU and dropout, added to a skip path (identity, or a plain 1x1
projection when the channel count changes). The regression head applies
two fully connected layers with a ReLU between them to every timestep.
Forward passes record a tape of intermediates so the backward pass can
replay the chain rule without a graph framework.
"""

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nncore
from .errors import (
    ConfigError,
    CorruptFileError,
    FormatError,
    ShapeError,
    ValidationError,
)
from .nncore import DilatedConvParams, LinearParams, ParameterStore, RngState

CKPT_MAGIC = b"TCNK"
CKPT_VERSION = 1


@dataclass
class TcnConfig:
    input_dim: int
    output_dim: int
    hidden_channels: int = 64
    num_blocks: int = 4
    kernel_size: int = 3
    dilation_schedule: tuple = None  # defaults to 1, 2, 4, ...
    dropout_rate: float = 0.2
    head_hidden: int = 64

    def __post_init__(self):
        if self.dilation_schedule is None:
            self.dilation_schedule = tuple(2**b for b in range(self.num_blocks))
        else:
            self.dilation_schedule = tuple(int(d) for d in self.dilation_schedule)
        if min(self.input_dim, self.output_dim, self.hidden_channels, self.head_hidden) < 1:
            raise ConfigError("model dimensions must be >= 1")
        if self.num_blocks < 1:
            raise ConfigError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if self.kernel_size < 1:
            raise ConfigError(f"kernel_size must be >= 1, got {self.kernel_size}")
        if len(self.dilation_schedule) != self.num_blocks:
            raise ConfigError(
                f"dilation schedule length {len(self.dilation_schedule)} != "
                f"num_blocks {self.num_blocks}"
            )
        if any(d < 1 for d in self.dilation_schedule):
            raise ConfigError("dilations must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")


@dataclass(eq=False)
class BlockParams:
    conv1: DilatedConvParams
    conv2: DilatedConvParams
    proj: LinearParams | None  # present iff in/out channel counts differ


@dataclass(eq=False)
class TcnModel:
    config: TcnConfig
    parameters: ParameterStore
    blocks: list
    head1: LinearParams
    head2: LinearParams
    precision: str = "standard"
    metadata: dict = field(default_factory=dict)

    @property
    def dtype(self):
        return nncore.resolve_dtype(self.precision)


def build_model(config, rng=None, precision="standard", metadata=None):
    dtype = nncore.resolve_dtype(precision)
    store = ParameterStore()

    def tensor(name, shape):
        return store.register(name, np.zeros(shape, dtype=dtype)).value

    blocks = []
    c_in = config.input_dim
    hidden = config.hidden_channels
    k = config.kernel_size
    for b, dilation in enumerate(config.dilation_schedule):
        convs = []
        for tag, cin in (("conv1", c_in), ("conv2", hidden)):
            prefix = f"block{b}.{tag}"
            convs.append(
                DilatedConvParams(
                    in_channels=cin,
                    out_channels=hidden,
                    kernel_size=k,
                    dilation=dilation,
                    direction=tensor(f"{prefix}.direction", (hidden, cin, k)),
                    gains=tensor(f"{prefix}.gains", (hidden,)),
                    bias=tensor(f"{prefix}.bias", (hidden,)),
                )
            )
        proj = None
        if c_in != hidden:
            proj = LinearParams(
                weights=tensor(f"block{b}.proj.weight", (hidden, c_in)),
                bias=tensor(f"block{b}.proj.bias", (hidden,)),
            )
        blocks.append(BlockParams(conv1=convs[0], conv2=convs[1], proj=proj))
        c_in = hidden

    head1 = LinearParams(
        weights=tensor("head.fc1.weight", (config.head_hidden, hidden)),
        bias=tensor("head.fc1.bias", (config.head_hidden,)),
    )
    head2 = LinearParams(
        weights=tensor("head.fc2.weight", (config.output_dim, config.head_hidden)),
        bias=tensor("head.fc2.bias", (config.output_dim,)),
    )
    nncore.init_parameters(store, rng if rng is not None else RngState(0))
    return TcnModel(
        config=config,
        parameters=store,
        blocks=blocks,
        head1=head1,
        head2=head2,
        precision=precision,
        metadata=dict(metadata or {}),
    )


def receptive_field(config):
    """Timesteps of history that can influence one output row: each block
    contributes (k-1)*d twice, plus the current row itself."""
    k = config.kernel_size
    return 1 + sum(2 * (k - 1) * d for d in config.dilation_schedule)


@dataclass(eq=False)
class BlockTape:
    x: np.ndarray
    pre1: np.ndarray
    mask1: np.ndarray | None
    mid: np.ndarray
    pre2: np.ndarray
    mask2: np.ndarray | None


@dataclass(eq=False)
class ModelTape:
    blocks: list
    trunk: np.ndarray
    head_pre: np.ndarray
    head_hidden: np.ndarray


def block_forward(x, block, dropout_rate=0.0, training=False, rng=None):
    """Run one residual block; returns (output, tape)."""
    pre1 = nncore.dilated_causal_conv_forward(x, block.conv1)
    act1, mask1 = nncore.dropout_forward(
        nncore.relu_forward(pre1), dropout_rate, training, rng
    )
    pre2 = nncore.dilated_causal_conv_forward(act1, block.conv2)
    act2, mask2 = nncore.dropout_forward(
        nncore.relu_forward(pre2), dropout_rate, training, rng
    )
    skip = x if block.proj is None else nncore.linear_forward(x, block.proj)
    tape = BlockTape(x=x, pre1=pre1, mask1=mask1, mid=act1, pre2=pre2, mask2=mask2)
    return act2 + skip, tape


def block_backward(block, tape, upstream, store, prefix):
    """Accumulate this block's parameter grads; return grad wrt its input."""
    if block.proj is None:
        grad_skip = upstream
    else:
        g = nncore.linear_backward(tape.x, block.proj, upstream)
        store.add_grad(f"{prefix}.proj.weight", g.weights)
        store.add_grad(f"{prefix}.proj.bias", g.bias)
        grad_skip = g.x

    grad = nncore.dropout_backward(tape.mask2, upstream)
    grad = nncore.relu_backward(tape.pre2, grad)
    g2 = nncore.dilated_causal_conv_backward(tape.mid, block.conv2, grad)
    store.add_grad(f"{prefix}.conv2.direction", g2.direction)
    store.add_grad(f"{prefix}.conv2.gains", g2.gains)
    store.add_grad(f"{prefix}.conv2.bias", g2.bias)

    grad = nncore.dropout_backward(tape.mask1, g2.x)
    grad = nncore.relu_backward(tape.pre1, grad)
    g1 = nncore.dilated_causal_conv_backward(tape.x, block.conv1, grad)
    store.add_grad(f"{prefix}.conv1.direction", g1.direction)
    store.add_grad(f"{prefix}.conv1.gains", g1.gains)
    store.add_grad(f"{prefix}.conv1.bias", g1.bias)
    return g1.x + grad_skip


def forward_features(model, x, training=False, rng=None):
    """Full forward pass over a T x input_dim matrix; returns (yhat, tape)."""
    x = np.ascontiguousarray(x, dtype=model.dtype)
    if x.ndim != 2 or x.shape[1] != model.config.input_dim:
        raise ShapeError(
            f"input of shape {x.shape} incompatible with input_dim="
            f"{model.config.input_dim}"
        )
    if x.shape[0] == 0:
        raise ValidationError("cannot run the model on an empty sequence")
    taps = []
    h = x
    for block in model.blocks:
        h, tape = block_forward(h, block, model.config.dropout_rate, training, rng)
        taps.append(tape)
    head_pre = nncore.linear_forward(h, model.head1)
    head_hidden = nncore.relu_forward(head_pre)
    yhat = nncore.linear_forward(head_hidden, model.head2)
    return yhat, ModelTape(blocks=taps, trunk=h, head_pre=head_pre, head_hidden=head_hidden)


def model_forward(model, seq, training=False, rng=None):
    """Per-timestamp predictions for one sequence. Outputs are raw scores;
    nothing squashes them into the label range."""
    try:
        yhat, _ = forward_features(model, seq.features, training=training, rng=rng)
    except (ShapeError, ValidationError) as err:
        raise type(err)(f"{seq.video_id}: {err}") from None
    return yhat


def model_backward(model, tape, upstream):
    """Accumulate parameter gradients for one recorded forward pass and
    return the gradient with respect to the model input."""
    store = model.parameters
    g_head2 = nncore.linear_backward(tape.head_hidden, model.head2, upstream)
    store.add_grad("head.fc2.weight", g_head2.weights)
    store.add_grad("head.fc2.bias", g_head2.bias)
    grad = nncore.relu_backward(tape.head_pre, g_head2.x)
    g_head1 = nncore.linear_backward(tape.trunk, model.head1, grad)
    store.add_grad("head.fc1.weight", g_head1.weights)
    store.add_grad("head.fc1.bias", g_head1.bias)
    grad = g_head1.x
    for b in reversed(range(len(model.blocks))):
        grad = block_backward(model.blocks[b], tape.blocks[b], grad, store, f"block{b}")
    return grad


# ---------------------------------------------------------------------------
# Checkpoints: magic + version, JSON config block, named f32 tensors.


def save_checkpoint(model, path):
    header = {
        "config": asdict(model.config),
        "precision": model.precision,
        "metadata": model.metadata,
    }
    header["config"]["dilation_schedule"] = list(model.config.dilation_schedule)
    blob = bytearray()
    blob += CKPT_MAGIC
    blob.append(CKPT_VERSION)
    payload = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += struct.pack("<I", len(payload))
    blob += payload
    names = model.parameters.names()
    blob += struct.pack("<I", len(names))
    for name in names:
        encoded = name.encode("utf-8")
        value = model.parameters[name].value
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", value.ndim)
        blob += struct.pack(f"<{value.ndim}I", *value.shape)
        blob += np.ascontiguousarray(value, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


class _Cursor:
    def __init__(self, data, path):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n):
        if self.offset + n > len(self.data):
            raise CorruptFileError(f"{self.path}: checkpoint truncated")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))


def load_checkpoint(path):
    data = open(path, "rb").read()
    if len(data) < len(CKPT_MAGIC) + 1 or data[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise FormatError(f"{path}: missing checkpoint magic")
    if data[len(CKPT_MAGIC)] != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {data[len(CKPT_MAGIC)]}")
    cur = _Cursor(data, path)
    cur.take(len(CKPT_MAGIC) + 1)
    (header_len,) = cur.unpack("<I")
    try:
        header = json.loads(cur.take(header_len).decode("utf-8"))
        config = TcnConfig(**header["config"])
        precision = header["precision"]
        metadata = header.get("metadata", {})
    except (ValueError, KeyError, TypeError) as err:
        raise CorruptFileError(f"{path}: bad checkpoint config block: {err}") from None

    model = build_model(config, rng=RngState(0), precision=precision, metadata=metadata)
    store = model.parameters
    (n_tensors,) = cur.unpack("<I")
    expected = store.names()
    if n_tensors != len(expected):
        raise CorruptFileError(
            f"{path}: checkpoint holds {n_tensors} tensors, model needs {len(expected)}"
        )
    seen = set()
    for _ in range(n_tensors):
        (name_len,) = cur.unpack("<H")
        name = cur.take(name_len).decode("utf-8")
        if name not in store or name in seen:
            raise CorruptFileError(f"{path}: unexpected tensor {name!r} in manifest")
        seen.add(name)
        (ndim,) = cur.unpack("<B")
        shape = cur.unpack(f"<{ndim}I")
        slot = store[name]
        if shape != slot.value.shape:
            raise CorruptFileError(
                f"{path}: tensor {name!r} has shape {shape}, model expects "
                f"{slot.value.shape}"
            )
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = cur.take(count * 4)
        slot.value[...] = np.frombuffer(raw, dtype="<f4").reshape(shape)
    if cur.offset != len(data):
        raise CorruptFileError(f"{path}: trailing bytes after last tensor")
    return model
