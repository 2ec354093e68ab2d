"""Radix-2 signed-digit streams and the online adder / multiplier.

Streams are most-significant-digit-first sequences over ``{-1, 0, 1}`` whose
first digit has weight ``1/2``. Every value handled here is exact: scalar
results are :class:`fractions.Fraction`, batch kernels work on scaled
integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .errors import ContractError, RangeError

#: Largest residual magnitude of the serial-parallel multiplier (delay 2),
#: confirmed by the exhaustive 8-bit sweep in the test-suite.
MUL_RESIDUAL_BOUND = Fraction(3, 4)


class SignedDigit(IntEnum):
    NEG = -1
    ZERO = 0
    POS = 1

    @property
    def plus(self) -> int:
        return 1 if self is SignedDigit.POS else 0

    @property
    def minus(self) -> int:
        return 1 if self is SignedDigit.NEG else 0

    @classmethod
    def from_bits(cls, plus: int, minus: int) -> "SignedDigit":
        if plus and minus:
            raise ContractError("bit pair (1, 1) is not a valid digit encoding")
        return cls(int(bool(plus)) - int(bool(minus)))


@dataclass(frozen=True)
class DigitStream:
    """An MSDF signed-digit fraction.

    ``start`` is the cycle at which the first digit becomes available; the
    online operators propagate it so latency can be read off the result.
    """

    digits: tuple
    start: int = 0

    def __post_init__(self):
        ds = tuple(int(d) for d in self.digits)
        if any(d not in (-1, 0, 1) for d in ds):
            raise ContractError("digits must be drawn from {-1, 0, 1}")
        object.__setattr__(self, "digits", ds)

    def __len__(self) -> int:
        return len(self.digits)

    def __iter__(self) -> Iterator[SignedDigit]:
        return (SignedDigit(d) for d in self.digits)

    @property
    def value(self) -> Fraction:
        return decode(self)

    @property
    def plus_bits(self) -> tuple:
        return tuple(1 if d > 0 else 0 for d in self.digits)

    @property
    def minus_bits(self) -> tuple:
        return tuple(1 if d < 0 else 0 for d in self.digits)

    def prefix(self, p: int) -> "DigitStream":
        return DigitStream(self.digits[:p], self.start)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.digits, dtype=np.int8)

    @classmethod
    def zeros(cls, length: int, start: int = 0) -> "DigitStream":
        return cls((0,) * length, start)

    @classmethod
    def from_array(cls, digits, start: int = 0) -> "DigitStream":
        return cls(tuple(int(d) for d in np.asarray(digits).ravel()), start)


@dataclass(frozen=True)
class ParallelOperand:
    """Two's-complement fraction with ``n`` fractional bits, held as ``scaled / 2**n``."""

    scaled: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ContractError("precision must be at least one bit")
        if abs(self.scaled) >= 1 << self.n:
            raise RangeError(f"|{self.scaled} / 2**{self.n}| must be < 1")

    @property
    def value(self) -> Fraction:
        return Fraction(self.scaled, 1 << self.n)

    @classmethod
    def from_fraction(cls, value, n: int) -> "ParallelOperand":
        return cls(_scaled_int(value, n), n)


@dataclass(frozen=True)
class OnlineDelays:
    delta_olm: int = 2
    delta_ola: int = 2

    def __post_init__(self):
        for name in ("delta_olm", "delta_ola"):
            d = getattr(self, name)
            if not 1 <= d <= 4:
                raise ContractError(f"{name} must lie in [1, 4], got {d}")


@dataclass(frozen=True)
class MulState:
    residual_w: Fraction
    j: int


def _scaled_int(value, n: int) -> int:
    v = Fraction(value)
    s = v * (1 << n)
    if s.denominator != 1:
        raise RangeError(f"{value} is not representable with {n} fractional bits")
    if not -1 < v < 1:
        raise RangeError(f"{value} lies outside (-1, 1)")
    return int(s)


def encode_fixed(value, n: int) -> DigitStream:
    """Conventional binary digits of ``value`` (sign applied digit-wise)."""
    s = _scaled_int(value, n)
    return DigitStream.from_array(kernels.encode_binary(np.array([s]), n)[0])


def decode(stream: DigitStream) -> Fraction:
    num = 0
    for d in stream.digits:
        num = 2 * num + d
    return Fraction(num, 1 << len(stream.digits))


def selm(v_hat) -> SignedDigit:
    """Output digit for a residual estimate with 2 fractional bits."""
    v_hat = Fraction(v_hat)
    if v_hat >= Fraction(1, 2):
        return SignedDigit.POS
    if v_hat < Fraction(-1, 2):
        return SignedDigit.NEG
    return SignedDigit.ZERO


def online_add(a: DigitStream, b: DigitStream, delay: int = 2) -> DigitStream:
    """Online sum ``(a + b) / 2`` with ``len(a) + delay`` output digits."""
    if len(a) != len(b):
        raise ContractError(f"operand lengths differ: {len(a)} != {len(b)}")
    if delay < 1:
        raise ContractError("online adder delay must be >= 1")
    out = kernels.online_add(a.as_array()[None, :], b.as_array()[None, :], delay)[0]
    return DigitStream.from_array(out, max(a.start, b.start) + delay)


def online_mul_sp(x: DigitStream, y: ParallelOperand, emit: int | None = None,
                  delay: int = 2) -> DigitStream:
    """Serial-parallel online product ``x * y`` truncated to ``emit`` digits.

    With ``emit = len(x) + y.n`` the product is exact; shorter emissions are
    within ``2**-emit`` of it.
    """
    full = len(x) + y.n
    if emit is None:
        emit = full
    if emit > full:
        raise ContractError(f"emit={emit} exceeds full product precision {full}")
    if delay < 2:
        raise ContractError("the serial-parallel multiplier needs delay >= 2")
    z, _, _ = kernels.mul_sp(x.as_array()[None, :], np.array([y.scaled]), y.n, emit, delay)
    return DigitStream.from_array(z[0], x.start + delay)


def mul_sp_states(x: DigitStream, y: ParallelOperand, emit: int,
                  delay: int = 2) -> Iterator[tuple[MulState, SignedDigit | None]]:
    """Step the multiplier recurrence literally, yielding ``(state, digit)``.

    Initialization steps yield ``None`` for the digit. This exact-rational
    path is independent of the batch kernels and is used to cross-check them.
    """
    xs = list(x.digits)
    yv = y.value
    scale = Fraction(1, 1 << delay)
    w = Fraction(0)
    for j in range(-delay, emit):
        k = j + delay
        xd = xs[k] if k < len(xs) else 0
        v = 2 * w + xd * yv * scale
        if j < 0:
            w = v
            yield MulState(w, j + 1), None
            continue
        v_hat = Fraction(math.floor(v * 4), 4)
        z = selm(v_hat)
        w = v - int(z)
        yield MulState(w, j + 1), z


def reduce_tree(streams: Sequence[DigitStream], delay: int = 2) -> tuple[DigitStream, int]:
    """Balanced online-adder tree; returns ``(stream, scale)``.

    ``decode(stream) * scale`` equals the exact sum of the inputs.
    """
    if not streams:
        raise ContractError("reduce_tree needs at least one stream")
    lengths = {len(s) for s in streams}
    if len(lengths) != 1:
        raise ContractError(f"streams differ in length: {sorted(lengths)}")
    level = list(streams)
    scale = 1
    while len(level) > 1:
        if len(level) % 2:
            last = level[-1]
            level.append(DigitStream.zeros(len(last), last.start))
        level = [online_add(level[i], level[i + 1], delay) for i in range(0, len(level), 2)]
        scale *= 2
    return level[0], scale


def tree_depth(m: int) -> int:
    """Number of adder stages for ``m`` operands (0 for a single operand)."""
    if m < 1:
        raise ContractError("tree needs at least one operand")
    return (m - 1).bit_length()
