"""Numpy implementations of the digit-serial kernels.

Every kernel works on a batch of independent streams laid out as a 2-D
``int8`` array of shape ``(batch, length)``, most significant digit first.
The compiled module ``_ckernels`` exposes the same functions with the same
signatures and results; this module is the fallback when it is not built.
"""

import numpy as np


def mul_sp(x, y, n, emit, delay=2):
    """Serial-parallel online multiplication of a batch.

    ``x`` holds serial signed digits, ``y`` the parallel operands as integers
    scaled by ``2**n``. Returns ``(z, w, wmax)``: the ``emit`` output digits,
    the final residual in units of ``2**-(n + delay)`` and the largest
    residual magnitude seen during the recurrence (same units).
    """
    x = np.ascontiguousarray(x, dtype=np.int8)
    y = np.ascontiguousarray(y, dtype=np.int64)
    batch, length = x.shape
    one = np.int64(1) << (n + delay)
    shift = n + delay - 2
    w = np.zeros(batch, dtype=np.int64)
    for k in range(min(delay, length)):
        w = 2 * w + x[:, k].astype(np.int64) * y
    for k in range(length, delay):
        w = 2 * w
    wmax = int(np.abs(w).max()) if batch else 0
    z = np.zeros((batch, emit), dtype=np.int8)
    for j in range(emit):
        k = j + delay
        if k < length:
            v = 2 * w + x[:, k].astype(np.int64) * y
        else:
            v = 2 * w
        q = v >> shift
        d = (q >= 2).astype(np.int64) - (q < -2).astype(np.int64)
        w = v - d * one
        z[:, j] = d
        if batch:
            wmax = max(wmax, int(np.abs(w).max()))
    return z, w, wmax


def online_add(a, b, delay=2):
    """Online addition emitting ``(a + b) / 2``; output length ``L + delay``."""
    a = np.ascontiguousarray(a, dtype=np.int8)
    b = np.ascontiguousarray(b, dtype=np.int8)
    batch, length = a.shape
    s = a.astype(np.int64) + b.astype(np.int64)
    half = np.int64(1) << delay
    one = half << 1
    w = np.zeros(batch, dtype=np.int64)
    for k in range(delay):
        w = 2 * w + (s[:, k] if k < length else 0)
    out = np.zeros((batch, length + delay), dtype=np.int8)
    for j in range(length + delay):
        k = j + delay
        v = 2 * w + (s[:, k] if k < length else 0)
        d = (v >= half).astype(np.int64) - (v < -half).astype(np.int64)
        w = v - d * one
        out[:, j] = d
    return out


def end_scan(z):
    """Early negative detection over a batch of SOP streams.

    Returns ``(term, sign)``: ``term[i]`` is the 1-based digit at which the
    prefix first went negative (0 if never), ``sign[i]`` is -1 for
    terminated streams, 0 for an all-zero value and 1 for positive ones.
    """
    z = np.ascontiguousarray(z, dtype=np.int8)
    batch, length = z.shape
    # prefix state clamped to {0, 1}: a prefix >= 1 ulp can never turn negative
    state = np.zeros(batch, dtype=np.int64)
    term = np.zeros(batch, dtype=np.int32)
    alive = np.ones(batch, dtype=bool)
    for k in range(length):
        d = 2 * state + z[:, k]
        neg = alive & (d < 0)
        term[neg] = k + 1
        alive &= ~neg
        state = np.where(alive, np.minimum(d, 1), state)
    sign = np.where(term > 0, -1, state).astype(np.int8)
    return term, sign


def decode_scaled(z):
    """Exact integer value of each stream in units of ``2**-length``."""
    z = np.ascontiguousarray(z, dtype=np.int8)
    batch, length = z.shape
    if length > 62:
        raise OverflowError("streams longer than 62 digits overflow int64")
    acc = np.zeros(batch, dtype=np.int64)
    for k in range(length):
        acc = 2 * acc + z[:, k]
    return acc


def encode_binary(values, n):
    """Conventional signed-binary digits of integers ``|v| < 2**n``."""
    values = np.ascontiguousarray(values, dtype=np.int64)
    mag = np.abs(values)
    sgn = np.sign(values).astype(np.int8)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    bits = ((mag[:, None] >> shifts[None, :]) & 1).astype(np.int8)
    return bits * sgn[:, None]
