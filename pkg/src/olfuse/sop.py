"""Sum-of-products units: spatial/temporal window units, PPU and END.

The scalar API (``wpu_spatial``, ``ppu_compute`` ...) works on
:class:`~olfuse.digits.DigitStream` objects. The ``*_sop`` batch functions
underneath operate on digit arrays and are what the simulator drives.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import kernels
from .digits import DigitStream, OnlineDelays, ParallelOperand, SignedDigit, tree_depth
from .errors import ContractError


class EndStatus(enum.Enum):
    RUNNING = "running"
    TERMINATED = "terminated"
    COMPLETED_POSITIVE = "positive"
    UNDETERMINED = "undetermined"


@dataclass(frozen=True)
class EndState:
    zplus: tuple = ()
    zminus: tuple = ()
    status: EndStatus = EndStatus.RUNNING
    terminated_at: int | None = None

    @property
    def cycle(self) -> int:
        return len(self.zplus)


def _bits_value(bits) -> int:
    v = 0
    for b in bits:
        v = 2 * v + b
    return v


def end_step(state: EndState, digit) -> EndState:
    """Append one SOP digit to the END registers and compare them."""
    if state.status is not EndStatus.RUNNING:
        raise ContractError(f"END unit already {state.status.value}")
    d = SignedDigit(int(digit))
    zp = state.zplus + (d.plus,)
    zm = state.zminus + (d.minus,)
    if _bits_value(zp) < _bits_value(zm):
        return EndState(zp, zm, EndStatus.TERMINATED, len(zp))
    return EndState(zp, zm, EndStatus.RUNNING)


def end_finish(state: EndState) -> EndState:
    """Close a stream that ran to completion without terminating."""
    if state.status is not EndStatus.RUNNING:
        return state
    status = (EndStatus.UNDETERMINED if state.zplus == state.zminus
              else EndStatus.COMPLETED_POSITIVE)
    return EndState(state.zplus, state.zminus, status)


def end_run(stream: DigitStream) -> EndState:
    state = EndState()
    for d in stream.digits:
        state = end_step(state, d)
        if state.status is EndStatus.TERMINATED:
            return state
    return end_finish(state)


@dataclass(frozen=True)
class Window:
    """K x K receptive field of one input channel."""

    pixels: tuple

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.pixels)
        k = len(rows)
        if k == 0 or any(len(r) != k for r in rows):
            raise ContractError("window must be a non-empty square grid")
        lengths = {len(p) for r in rows for p in r}
        if len(lengths) != 1:
            raise ContractError("window pixel streams differ in length")
        object.__setattr__(self, "pixels", rows)

    @property
    def k(self) -> int:
        return len(self.pixels)

    def digit_array(self) -> np.ndarray:
        return np.array([[p.digits for p in r] for r in self.pixels],
                        dtype=np.int8).reshape(self.k * self.k, -1)

    @property
    def start(self) -> int:
        return max(p.start for r in self.pixels for p in r)

    @classmethod
    def from_values(cls, values, n: int) -> "Window":
        from .digits import encode_fixed

        return cls(tuple(tuple(encode_fixed(v, n) for v in row) for row in values))


@dataclass(frozen=True)
class Kernel:
    weights: tuple

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.weights)
        k = len(rows)
        if k == 0 or any(len(r) != k for r in rows):
            raise ContractError("kernel must be a non-empty square grid")
        if len({w.n for r in rows for w in r}) != 1:
            raise ContractError("kernel weights differ in precision")
        object.__setattr__(self, "weights", rows)

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def n(self) -> int:
        return self.weights[0][0].n

    def scaled_array(self) -> np.ndarray:
        return np.array([w.scaled for r in self.weights for w in r], dtype=np.int64)

    @classmethod
    def from_values(cls, values, n: int) -> "Kernel":
        return cls(tuple(tuple(ParallelOperand.from_fraction(v, n) for v in row)
                         for row in values))


@dataclass(frozen=True)
class PixelResult:
    value: Fraction
    cycles_used: int
    end_status: EndStatus | None
    stream: DigitStream
    scale: int

    @property
    def relu_value(self) -> Fraction:
        return max(self.value, Fraction(0))


# --- batch machinery -------------------------------------------------------

def tree_batch(digits: np.ndarray, delay: int) -> np.ndarray:
    """Reduce axis 1 of ``(B, m, L)`` with a balanced online-adder tree."""
    b, m, length = digits.shape
    while m > 1:
        if m % 2:
            digits = np.concatenate([digits, np.zeros((b, 1, length), np.int8)], axis=1)
            m += 1
        lhs = digits[:, 0::2].reshape(-1, length)
        rhs = digits[:, 1::2].reshape(-1, length)
        digits = kernels.online_add(lhs, rhs, delay).reshape(b, m // 2, length + delay)
        m //= 2
        length += delay
    return digits[:, 0]


def spatial_sop(x_digits: np.ndarray, weights: np.ndarray, n: int, emit: int,
                delays: OnlineDelays) -> tuple[np.ndarray, int, int]:
    """PPU outputs for ``P`` pixels and ``M`` filters, spatial window units.

    ``x_digits`` is ``(P, N, KK, Lx)``, ``weights`` is ``(M, N, KK)`` scaled by
    ``2**n``. Returns ``(digits (P, M, L), latency, scale_exp)`` with the
    stream value equal to the SOP divided by ``2**scale_exp``.
    """
    p, nch, kk, lx = x_digits.shape
    m = weights.shape[0]
    if weights.shape[1:] != (nch, kk):
        raise ContractError(f"weights {weights.shape} do not match windows {x_digits.shape}")
    xs = np.broadcast_to(x_digits[:, None], (p, m, nch, kk, lx)).reshape(-1, lx)
    ys = np.broadcast_to(weights[None], (p, m, nch, kk)).ravel()
    z, _, _ = kernels.mul_sp(xs, ys, n, emit, delays.delta_olm)
    z = tree_batch(z.reshape(p * m * nch, kk, emit), delays.delta_ola)
    z = tree_batch(z.reshape(p * m, nch, -1), delays.delta_ola)
    dk, dn = tree_depth(kk), tree_depth(nch)
    latency = delays.delta_olm + delays.delta_ola * (dk + dn)
    return z.reshape(p, m, -1), latency, dk + dn


def exact_products(x_digits: np.ndarray, y: np.ndarray, n: int, delay: int) -> np.ndarray:
    """Exact products in units of ``2**-(Lx + n)`` from a short multiplier run.

    The multiplier emits ``Lx - 1`` digits; the remaining weight sits in the
    residual register, so digits plus residual give the exact product.
    """
    lx = x_digits.shape[1]
    emit = lx - 1
    z, w, _ = kernels.mul_sp(x_digits, y, n, emit, delay)
    # units of 2**-(n + delay + emit)
    total = kernels.decode_scaled(z) * (np.int64(1) << (n + delay)) + w
    drop = n + delay + emit - (lx + n)
    if drop > 0:
        if np.any(total & ((1 << drop) - 1)):
            raise ContractError("multiplier residual is not aligned to the product grid")
        total = total >> drop
    return total


def temporal_sop(x_digits: np.ndarray, weights: np.ndarray, n: int, delays: OnlineDelays,
                 acc_cycles: int = 1) -> tuple[np.ndarray, int, int]:
    """PPU outputs with temporal window units (one multiplier per window)."""
    p, nch, kk, lx = x_digits.shape
    m = weights.shape[0]
    if weights.shape[1:] != (nch, kk):
        raise ContractError(f"weights {weights.shape} do not match windows {x_digits.shape}")
    xs = np.broadcast_to(x_digits[:, None], (p, m, nch, kk, lx)).reshape(-1, lx)
    ys = np.broadcast_to(weights[None], (p, m, nch, kk)).ravel()
    prods = exact_products(xs, ys, n, delays.delta_olm).reshape(p * m * nch, kk)
    acc = prods.sum(axis=1)
    dk, dn = tree_depth(kk), tree_depth(nch)
    width = lx + n + dk
    z = kernels.encode_binary(acc, width).reshape(p * m, nch, width)
    z = tree_batch(z, delays.delta_ola)
    run = delays.delta_olm + (lx - 1) + acc_cycles
    latency = kk * run + delays.delta_ola * dn
    return z.reshape(p, m, -1), latency, dk + dn


def decode_batch(digits: np.ndarray) -> np.ndarray:
    """Exact values in units of ``2**-L``; object ints past 62 digits."""
    flat = digits.reshape(-1, digits.shape[-1])
    if flat.shape[1] <= 62:
        return kernels.decode_scaled(flat).reshape(digits.shape[:-1])
    out = np.zeros(flat.shape[0], dtype=object)
    for k in range(flat.shape[1]):
        out = out * 2 + flat[:, k].astype(object)
    return out.reshape(digits.shape[:-1])


# --- scalar API -------------------------------------------------------------

def _check_pair(window: Window, kernel: Kernel):
    if window.k != kernel.k:
        raise ContractError(f"window is {window.k}x{window.k}, kernel is {kernel.k}x{kernel.k}")


def wpu_spatial(window: Window, kernel: Kernel, emit: int | None = None,
                delays: OnlineDelays = OnlineDelays()) -> tuple[DigitStream, int]:
    """K*K concurrent multipliers feeding one adder tree."""
    _check_pair(window, kernel)
    x = window.digit_array()
    if emit is None:
        emit = x.shape[1] + kernel.n
    z, latency, exp = spatial_sop(x[None, None], kernel.scaled_array()[None, None],
                                  kernel.n, emit, delays)
    return DigitStream.from_array(z[0, 0], window.start + latency), 1 << exp


def wpu_temporal(window: Window, kernel: Kernel, acc_cycles: int = 1,
                 delays: OnlineDelays = OnlineDelays()) -> tuple[DigitStream, int]:
    """One multiplier cycled over the window, then an accumulator."""
    _check_pair(window, kernel)
    x = window.digit_array()
    z, latency, exp = temporal_sop(x[None, None], kernel.scaled_array()[None, None],
                                   kernel.n, delays, acc_cycles)
    return DigitStream.from_array(z[0, 0], window.start + latency), 1 << exp


def ppu_compute(windows: Sequence[Window], kernels_: Sequence[Kernel], end_enabled: bool = True,
                design: str = "ds1", emit: int | None = None, acc_cycles: int = 1,
                delays: OnlineDelays = OnlineDelays()) -> PixelResult:
    """One output pixel from ``N`` channel windows, with optional END."""
    if not windows or len(windows) != len(kernels_):
        raise ContractError("need one kernel per window and at least one window")
    for w, k in zip(windows, kernels_):
        _check_pair(w, k)
    n = kernels_[0].n
    x = np.stack([w.digit_array() for w in windows])[None]
    y = np.stack([k.scaled_array() for k in kernels_])[None]
    if design == "ds1":
        if emit is None:
            emit = x.shape[-1] + n
        z, latency, exp = spatial_sop(x, y, n, emit, delays)
    elif design == "ds2":
        z, latency, exp = temporal_sop(x, y, n, delays, acc_cycles)
    else:
        raise ContractError(f"unknown design {design!r}")
    start = max(w.start for w in windows) + latency
    stream = DigitStream.from_array(z[0, 0], start)
    scale = 1 << exp
    if not end_enabled:
        return PixelResult(stream.value * scale, len(stream), None, stream, scale)
    state = end_run(stream)
    if state.status is EndStatus.TERMINATED:
        return PixelResult(Fraction(0), state.terminated_at, state.status, stream, scale)
    return PixelResult(stream.value * scale, len(stream), state.status, stream, scale)


def relu(value):
    return value if value > 0 else type(value)(0)


def maxpool(tile, window: int, stride: int) -> np.ndarray:
    """Per-window maxima of a square 2-D tile (decoded values)."""
    a = np.asarray(tile)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ContractError("maxpool expects a square 2-D tile")
    size = a.shape[0]
    if window < 1 or stride < 1 or size < window or (size - window) % stride:
        raise ContractError(f"pool {window}/{stride} does not tile a {size}x{size} input")
    out = (size - window) // stride + 1
    res = np.empty((out, out), dtype=a.dtype)
    for i in range(out):
        for j in range(out):
            res[i, j] = a[i * stride:i * stride + window, j * stride:j * stride + window].max()
    return res
