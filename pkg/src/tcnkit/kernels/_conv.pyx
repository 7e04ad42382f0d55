# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled dilated causal convolution kernels.

Same contract as kernels.pyref; see that module for the layout
conventions. Filters are repacked tap-major so the innermost loops run
over contiguous memory.
"""

import numpy as np

NAME = "cython"

ctypedef fused real:
    float
    double


def conv_forward(real[:, ::1] x, real[:, :, ::1] w, real[::1] bias, Py_ssize_t dilation):
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t cin = x.shape[1]
    cdef Py_ssize_t cout = w.shape[0]
    cdef Py_ssize_t k = w.shape[2]
    cdef Py_ssize_t s, i, o, c, src
    cdef real acc

    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64

    # wt[i, o, c] = w[o, c, i]
    wt_arr = np.empty((k, cout, cin), dtype=dtype)
    cdef real[:, :, ::1] wt = wt_arr
    for o in range(cout):
        for c in range(cin):
            for i in range(k):
                wt[i, o, c] = w[o, c, i]

    y_arr = np.empty((T, cout), dtype=dtype)
    cdef real[:, ::1] y = y_arr
    for s in range(T):
        for o in range(cout):
            y[s, o] = bias[o]
        for i in range(k):
            src = s - dilation * i
            if src < 0:
                break
            for o in range(cout):
                acc = 0
                for c in range(cin):
                    acc += wt[i, o, c] * x[src, c]
                y[s, o] += acc
    return y_arr


def conv_backward(real[:, ::1] x, real[:, :, ::1] w, real[:, ::1] upstream, Py_ssize_t dilation):
    cdef Py_ssize_t T = x.shape[0]
    cdef Py_ssize_t cin = x.shape[1]
    cdef Py_ssize_t cout = w.shape[0]
    cdef Py_ssize_t k = w.shape[2]
    cdef Py_ssize_t s, i, o, c, shift
    cdef real acc, g

    if real is float:
        dtype = np.float32
    else:
        dtype = np.float64

    # wc[i, c, o] = w[o, c, i]
    wc_arr = np.empty((k, cin, cout), dtype=dtype)
    cdef real[:, :, ::1] wc = wc_arr
    for o in range(cout):
        for c in range(cin):
            for i in range(k):
                wc[i, c, o] = w[o, c, i]

    gx_arr = np.zeros((T, cin), dtype=dtype)
    gwt_arr = np.zeros((k, cout, cin), dtype=dtype)
    gb_arr = np.zeros(cout, dtype=dtype)
    cdef real[:, ::1] gx = gx_arr
    cdef real[:, :, ::1] gwt = gwt_arr
    cdef real[::1] gb = gb_arr
    cdef real[:, ::1] gy = upstream

    for s in range(T):
        for o in range(cout):
            gb[o] += gy[s, o]

    for i in range(k):
        shift = dilation * i
        if shift >= T:
            break
        for s in range(shift, T):
            # grad wrt filter tap i: outer product of upstream row and input row
            for o in range(cout):
                g = gy[s, o]
                for c in range(cin):
                    gwt[i, o, c] += g * x[s - shift, c]
            # grad wrt input: project upstream row through tap i
            for c in range(cin):
                acc = 0
                for o in range(cout):
                    acc += wc[i, c, o] * gy[s, o]
                gx[s - shift, c] += acc

    gw_arr = np.empty((cout, cin, k), dtype=dtype)
    cdef real[:, :, ::1] gw = gw_arr
    for i in range(k):
        for o in range(cout):
            for c in range(cin):
                gw[o, c, i] = gwt[i, o, c]
    return gx_arr, gw_arr, gb_arr
