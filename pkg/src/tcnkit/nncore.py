"""Numeric building blocks with hand-written forward and backward passes.

Everything here is a pure function of its inputs plus an explicit
RngState, so runs are reproducible coordinate-for-coordinate. The dilated
convolution inner loops are delegated to the kernels subpackage (compiled
extension or numpy fallback); the weight-norm chain rule, activations and
the finite-difference oracle live here.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, ShapeError, SingularityError

DTYPES = {"standard": np.float32, "wide": np.float64}


def resolve_dtype(precision):
    try:
        return DTYPES[precision]
    except KeyError:
        raise ConfigError(
            f"unknown precision {precision!r}; expected one of {sorted(DTYPES)}"
        ) from None


@dataclass
class RngState:
    """Counter-based random stream: (seed, counter) fully determine draws."""

    seed: int
    counter: int = 0

    def generator(self):
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.counter,))
        self.counter += 1
        return np.random.default_rng(seq)


@dataclass(eq=False)
class Parameter:
    value: np.ndarray
    grad: np.ndarray


class ParameterStore:
    """Flat registry of named tensors and their gradient buffers.

    Iteration follows registration order, which keeps every gradient
    reduction and optimizer sweep deterministic.
    """

    def __init__(self):
        self._slots = {}

    def register(self, name, value):
        if name in self._slots:
            raise ConfigError(f"parameter {name!r} registered twice")
        value = np.asarray(value)
        param = Parameter(value=value, grad=np.zeros_like(value))
        self._slots[name] = param
        return param

    def __contains__(self, name):
        return name in self._slots

    def __getitem__(self, name):
        try:
            return self._slots[name]
        except KeyError:
            raise KeyError(f"unknown parameter {name!r}") from None

    def __len__(self):
        return len(self._slots)

    def names(self):
        return list(self._slots)

    def items(self):
        return self._slots.items()

    def add_grad(self, name, grad):
        slot = self[name]
        if slot.grad.shape != np.shape(grad):
            raise ShapeError(
                f"gradient shape {np.shape(grad)} does not match parameter "
                f"{name!r} of shape {slot.grad.shape}"
            )
        slot.grad += grad

    def zero_grads(self):
        for slot in self._slots.values():
            slot.grad[...] = 0


@dataclass(eq=False)
class DilatedConvParams:
    """One causal conv layer in weight-norm form: w = gains * dir / ||dir||."""

    in_channels: int
    out_channels: int
    kernel_size: int
    dilation: int
    direction: np.ndarray  # out x in x k
    gains: np.ndarray  # out
    bias: np.ndarray  # out

    def __post_init__(self):
        if self.kernel_size < 1:
            raise ConfigError(f"kernel_size must be >= 1, got {self.kernel_size}")
        if self.dilation < 1:
            raise ConfigError(f"dilation must be >= 1, got {self.dilation}")
        expected = (self.out_channels, self.in_channels, self.kernel_size)
        if self.direction.shape != expected:
            raise ShapeError(
                f"direction shape {self.direction.shape} != {expected}"
            )
        if self.gains.shape != (self.out_channels,):
            raise ShapeError(f"gains shape {self.gains.shape} != ({self.out_channels},)")
        if self.bias.shape != (self.out_channels,):
            raise ShapeError(f"bias shape {self.bias.shape} != ({self.out_channels},)")


@dataclass(eq=False)
class LinearParams:
    weights: np.ndarray  # out x in
    bias: np.ndarray  # out

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"inconsistent linear shapes {self.weights.shape} / {self.bias.shape}"
            )


ConvGrads = namedtuple("ConvGrads", ["x", "direction", "gains", "bias"])
LinearGrads = namedtuple("LinearGrads", ["x", "weights", "bias"])


def weight_norm_effective(direction_row, gain):
    """Effective weight row g * v / ||v||_2 for one output channel."""
    v = np.asarray(direction_row)
    norm = np.sqrt((v.astype(np.float64) ** 2).sum())
    if norm == 0.0:
        raise SingularityError("weight-norm direction is the zero vector")
    return ((gain / norm) * v.astype(np.float64)).astype(v.dtype)


def effective_conv_weights(params):
    """Weight-normalized filter tensor for a whole conv layer."""
    v = params.direction
    norms = np.sqrt((v * v).sum(axis=(1, 2)))
    if np.any(norms == 0.0):
        row = int(np.nonzero(norms == 0.0)[0][0])
        raise SingularityError(f"direction row {row} is the zero vector")
    return (params.gains / norms)[:, None, None] * v


def dilated_causal_conv_forward(x, params):
    """Causal conv with left zero padding; output keeps the input length."""
    x = np.ascontiguousarray(x)
    if x.ndim != 2 or x.shape[1] != params.in_channels:
        raise ShapeError(
            f"input of shape {x.shape} incompatible with in_channels="
            f"{params.in_channels}"
        )
    if x.shape[0] < 1:
        raise ShapeError("empty input sequence")
    w = np.ascontiguousarray(effective_conv_weights(params))
    return kernels.conv_forward(x, w, params.bias, params.dilation)


def dilated_causal_conv_backward(x, params, upstream):
    """Exact gradients of the causal conv composed with weight norm."""
    x = np.ascontiguousarray(x)
    upstream = np.ascontiguousarray(upstream)
    if upstream.shape != (x.shape[0], params.out_channels):
        raise ShapeError(
            f"upstream shape {upstream.shape} incompatible with "
            f"({x.shape[0]}, {params.out_channels})"
        )
    v = params.direction
    w = np.ascontiguousarray(effective_conv_weights(params))
    grad_x, grad_w, grad_bias = kernels.conv_backward(x, w, upstream, params.dilation)

    # chain rule through w_o = g_o * v_o / ||v_o||
    norms = np.sqrt((v * v).sum(axis=(1, 2)))
    unit = v / norms[:, None, None]
    grad_gains = (grad_w * unit).sum(axis=(1, 2))
    grad_direction = (params.gains / norms)[:, None, None] * (
        grad_w - grad_gains[:, None, None] * unit
    )
    return ConvGrads(grad_x, grad_direction, grad_gains, grad_bias)


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(x, upstream):
    """Subgradient 0 at x == 0, hence the strict comparison."""
    return upstream * (x > 0)


def dropout_forward(x, rate, training, rng):
    """Inverted dropout: kept entries scaled by 1/(1-rate).

    Returns (output, mask) where mask is the multiplier matrix, or None on
    the identity path (inference or rate 0).
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    gen = rng.generator()
    keep = gen.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(mask, upstream):
    if mask is None:
        return upstream
    return upstream * mask


def linear_forward(x, params):
    if x.ndim != 2 or x.shape[1] != params.weights.shape[1]:
        raise ShapeError(
            f"input of shape {x.shape} incompatible with weights "
            f"{params.weights.shape}"
        )
    return x @ params.weights.T + params.bias


def linear_backward(x, params, upstream):
    if upstream.shape != (x.shape[0], params.weights.shape[0]):
        raise ShapeError(
            f"upstream shape {upstream.shape} incompatible with "
            f"({x.shape[0]}, {params.weights.shape[0]})"
        )
    grad_x = upstream @ params.weights
    grad_w = upstream.T @ x
    grad_bias = upstream.sum(axis=0)
    return LinearGrads(grad_x, grad_w, grad_bias)


def finite_diff_grad(eval_fn, store, eps=1e-5):
    """Central-difference gradient of a scalar function of the store.

    eval_fn must be deterministic (freeze dropout masks by resetting the
    rng counter inside it). Returns a dict name -> float64 gradient array.
    """
    grads = {}
    for name, slot in store.items():
        value = slot.value
        grad = np.zeros(value.shape, dtype=np.float64)
        flat = value.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            f_plus = eval_fn(store)
            flat[idx] = orig - eps
            f_minus = eval_fn(store)
            flat[idx] = orig
            grad.reshape(-1)[idx] = (f_plus - f_minus) / (2.0 * eps)
        grads[name] = grad
    return grads


def init_parameters(store, rng):
    """Seeded init: weights uniform +-sqrt(1/fan_in), gains = row norms,
    biases zero. Gains matching their direction norms make the initial
    effective weights equal the raw draws."""
    gen = rng.generator()
    for name, slot in store.items():
        if name.endswith(".direction") or name.endswith(".weight"):
            shape = slot.value.shape
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(1.0 / fan_in)
            slot.value[...] = gen.uniform(-bound, bound, size=shape)
        elif name.endswith(".bias"):
            slot.value[...] = 0
        elif not name.endswith(".gains"):
            raise ConfigError(f"cannot infer init role of parameter {name!r}")
    for name, slot in store.items():
        if name.endswith(".gains"):
            sibling = name[: -len("gains")] + "direction"
            direction = store[sibling].value
            axes = tuple(range(1, direction.ndim))
            slot.value[...] = np.sqrt((direction * direction).sum(axis=axes))
