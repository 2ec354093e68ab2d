# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled digit-serial kernels; mirrors ``olfuse._pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int8_t, int32_t, int64_t

cnp.import_array()


def mul_sp(x, y, int n, int emit, int delay=2):
    cdef const int8_t[:, ::1] xv = np.ascontiguousarray(x, dtype=np.int8)
    cdef const int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef Py_ssize_t batch = xv.shape[0], length = xv.shape[1]
    z = np.zeros((batch, emit), dtype=np.int8)
    wout = np.zeros(batch, dtype=np.int64)
    cdef int8_t[:, ::1] zv = z
    cdef int64_t[::1] wv = wout
    cdef int64_t one = (<int64_t>1) << (n + delay)
    cdef int shift = n + delay - 2
    cdef int64_t w, v, q, yy, wabs, wmax = 0
    cdef int8_t d
    cdef Py_ssize_t i, j, k
    for i in range(batch):
        yy = yv[i]
        w = 0
        for k in range(delay):
            if k < length:
                w = 2 * w + xv[i, k] * yy
            else:
                w = 2 * w
        wabs = w if w >= 0 else -w
        if wabs > wmax:
            wmax = wabs
        for j in range(emit):
            k = j + delay
            if k < length:
                v = 2 * w + xv[i, k] * yy
            else:
                v = 2 * w
            q = v >> shift
            if q >= 2:
                d = 1
            elif q < -2:
                d = -1
            else:
                d = 0
            w = v - d * one
            zv[i, j] = d
            wabs = w if w >= 0 else -w
            if wabs > wmax:
                wmax = wabs
        wv[i] = w
    return z, wout, int(wmax)


def online_add(a, b, int delay=2):
    cdef const int8_t[:, ::1] av = np.ascontiguousarray(a, dtype=np.int8)
    cdef const int8_t[:, ::1] bv = np.ascontiguousarray(b, dtype=np.int8)
    cdef Py_ssize_t batch = av.shape[0], length = av.shape[1]
    out = np.zeros((batch, length + delay), dtype=np.int8)
    cdef int8_t[:, ::1] ov = out
    cdef int64_t half = (<int64_t>1) << delay
    cdef int64_t one = half << 1
    cdef int64_t w, v
    cdef int8_t d
    cdef Py_ssize_t i, j, k
    for i in range(batch):
        w = 0
        for k in range(delay):
            if k < length:
                w = 2 * w + av[i, k] + bv[i, k]
            else:
                w = 2 * w
        for j in range(length + delay):
            k = j + delay
            if k < length:
                v = 2 * w + av[i, k] + bv[i, k]
            else:
                v = 2 * w
            if v >= half:
                d = 1
            elif v < -half:
                d = -1
            else:
                d = 0
            w = v - d * one
            ov[i, j] = d
    return out


def end_scan(z):
    cdef const int8_t[:, ::1] zv = np.ascontiguousarray(z, dtype=np.int8)
    cdef Py_ssize_t batch = zv.shape[0], length = zv.shape[1]
    term = np.zeros(batch, dtype=np.int32)
    sign = np.zeros(batch, dtype=np.int8)
    cdef int32_t[::1] tv = term
    cdef int8_t[::1] sv = sign
    cdef int64_t state, d
    cdef Py_ssize_t i, k
    for i in range(batch):
        state = 0
        for k in range(length):
            d = 2 * state + zv[i, k]
            if d < 0:
                tv[i] = <int32_t>(k + 1)
                state = -1
                break
            state = 1 if d >= 1 else 0
        sv[i] = <int8_t>state
    return term, sign


def decode_scaled(z):
    cdef const int8_t[:, ::1] zv = np.ascontiguousarray(z, dtype=np.int8)
    cdef Py_ssize_t batch = zv.shape[0], length = zv.shape[1]
    if length > 62:
        raise OverflowError("streams longer than 62 digits overflow int64")
    out = np.zeros(batch, dtype=np.int64)
    cdef int64_t[::1] ov = out
    cdef int64_t acc
    cdef Py_ssize_t i, k
    for i in range(batch):
        acc = 0
        for k in range(length):
            acc = 2 * acc + zv[i, k]
        ov[i] = acc
    return out


def encode_binary(values, int n):
    cdef const int64_t[::1] vv = np.ascontiguousarray(values, dtype=np.int64)
    cdef Py_ssize_t batch = vv.shape[0]
    out = np.zeros((batch, n), dtype=np.int8)
    cdef int8_t[:, ::1] ov = out
    cdef int64_t mag
    cdef int8_t sgn
    cdef Py_ssize_t i, k
    for i in range(batch):
        mag = vv[i]
        sgn = 1
        if mag < 0:
            mag = -mag
            sgn = -1
        for k in range(n):
            if (mag >> (n - 1 - k)) & 1:
                ov[i, k] = sgn
    return out
