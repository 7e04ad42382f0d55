"""Pure numpy reference implementation of the dilated causal conv kernels.

Used when the compiled extension is unavailable, and as the ground truth
the compiled kernels are benchmarked and tested against.

Conventions (shared with the compiled backend):
  x    : T x C_in input, one row per timestep
  w    : C_out x C_in x k effective filter (already weight-normalized)
  bias : C_out
  y[s, o] = bias[o] + sum_{i, c} w[o, c, i] * x[s - dilation*i, c]
with rows before the start of the sequence read as zero.
"""

import numpy as np

NAME = "python"


def conv_forward(x, w, bias, dilation):
    T = x.shape[0]
    cout, _, k = w.shape
    y = np.empty((T, cout), dtype=x.dtype)
    y[:] = bias
    for i in range(k):
        shift = dilation * i
        if shift >= T:
            break
        y[shift:] += x[: T - shift] @ w[:, :, i].T
    return y


def conv_backward(x, w, upstream, dilation):
    T = x.shape[0]
    _, _, k = w.shape
    grad_x = np.zeros_like(x)
    grad_w = np.zeros_like(w)
    grad_bias = upstream.sum(axis=0)
    for i in range(k):
        shift = dilation * i
        if shift >= T:
            break
        grad_x[: T - shift] += upstream[shift:] @ w[:, :, i]
        grad_w[:, :, i] = upstream[shift:].T @ x[: T - shift]
    return grad_x, grad_w, grad_bias
