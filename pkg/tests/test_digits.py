from fractions import Fraction

import numpy as np
import pytest

from olfuse.digits import (MUL_RESIDUAL_BOUND, DigitStream, OnlineDelays, ParallelOperand,
                           SignedDigit, decode, encode_fixed, mul_sp_states, online_add,
                           online_mul_sp, reduce_tree, selm, tree_depth)
from olfuse.errors import ContractError, RangeError
from olfuse import kernels

from conftest import random_sd


def exact(x: DigitStream) -> Fraction:
    # independent of decode(): sum of d * 2**-(i+1)
    return sum((Fraction(int(d), 2 ** (i + 1)) for i, d in enumerate(x.digits)), Fraction(0))


def test_signed_digit_bits():
    assert SignedDigit.from_bits(1, 0) is SignedDigit.POS
    assert SignedDigit.from_bits(0, 1) is SignedDigit.NEG
    assert SignedDigit.from_bits(0, 0) is SignedDigit.ZERO
    with pytest.raises(ContractError):
        SignedDigit.from_bits(1, 1)
    assert (SignedDigit.NEG.plus, SignedDigit.NEG.minus) == (0, 1)


def test_stream_rejects_bad_digits():
    with pytest.raises(ContractError):
        DigitStream((2, 0))


@pytest.mark.parametrize("n", [1, 4, 8])
def test_encode_round_trip(n):
    for k in range(-(1 << n) + 1, 1 << n):
        v = Fraction(k, 1 << n)
        assert decode(encode_fixed(v, n)) == v


def test_encode_range_errors():
    with pytest.raises(RangeError):
        encode_fixed(1, 8)
    with pytest.raises(RangeError):
        encode_fixed(Fraction(1, 3), 8)
    with pytest.raises(RangeError):
        ParallelOperand(256, 8)


def test_selm_thresholds():
    assert selm(Fraction(1, 2)) is SignedDigit.POS
    assert selm(Fraction(1, 4)) is SignedDigit.ZERO
    assert selm(Fraction(-1, 2)) is SignedDigit.ZERO
    assert selm(Fraction(-3, 4)) is SignedDigit.NEG


def test_multiplier_trivial():
    x = DigitStream((1,))
    y = ParallelOperand(1, 1)
    z = online_mul_sp(x, y, emit=2)
    assert decode(z) == Fraction(1, 4)
    assert decode(online_mul_sp(DigitStream.zeros(8), ParallelOperand(77, 8))) == 0


def test_multiplier_exhaustive_8bit():
    n = 8
    ks = np.arange(-(1 << n) + 1, 1 << n)
    x = kernels.encode_binary(ks, n)
    xs = np.repeat(x, len(ks), axis=0)
    ys = np.tile(ks, len(ks))
    z, _, wmax = kernels.mul_sp(xs, ys, n, 2 * n, 2)
    got = kernels.decode_scaled(z)
    want = np.repeat(ks, len(ks)) * ys
    assert np.array_equal(got, want)
    # residual stays inside |w| <= 3/4 (units of 2**-(n+2))
    assert wmax <= MUL_RESIDUAL_BOUND * (1 << (n + 2))


def test_literal_recurrence_matches_kernel(rng):
    n = 6
    for _ in range(200):
        x = DigitStream.from_array(random_sd(rng, 7))
        y = ParallelOperand(int(rng.integers(-(1 << n) + 1, 1 << n)), n)
        digits, states = [], []
        for st, d in mul_sp_states(x, y, 13):
            states.append(st)
            if d is not None:
                digits.append(int(d))
        assert tuple(digits) == online_mul_sp(x, y, 13).digits
        assert all(abs(s.residual_w) <= MUL_RESIDUAL_BOUND for s in states)
        # exact product: output digits plus final residual scaled by 2**-emit
        assert exact(DigitStream(tuple(digits))) + states[-1].residual_w / 2 ** 13 == \
            exact(x) * y.value


def test_prefix_property(rng):
    n = 8
    for _ in range(300):
        x = DigitStream.from_array(random_sd(rng, n))
        y = ParallelOperand(int(rng.integers(-(1 << n) + 1, 1 << n)), n)
        z = online_mul_sp(x, y)
        true = exact(x) * y.value
        for p in range(1, len(z) + 1):
            assert abs(decode(z.prefix(p)) - true) < Fraction(1, 2 ** p)


@pytest.mark.parametrize("delay", [2, 3, 4])
def test_multiplier_delays(rng, delay):
    n = 5
    for _ in range(100):
        x = DigitStream.from_array(random_sd(rng, n), start=3)
        y = ParallelOperand(int(rng.integers(-(1 << n) + 1, 1 << n)), n)
        z = online_mul_sp(x, y, delay=delay)
        assert decode(z) == exact(x) * y.value
        assert z.start == 3 + delay


def test_multiplier_rejects():
    x = DigitStream.zeros(4)
    with pytest.raises(ContractError):
        online_mul_sp(x, ParallelOperand(1, 4), delay=1)
    with pytest.raises(ContractError):
        online_mul_sp(x, ParallelOperand(1, 4), emit=9)
    with pytest.raises(ContractError):
        OnlineDelays(5, 2)


@pytest.mark.parametrize("delay", [1, 2, 3])
def test_online_add_exact(rng, delay):
    for _ in range(300):
        a = DigitStream.from_array(random_sd(rng, 9), start=1)
        b = DigitStream.from_array(random_sd(rng, 9), start=4)
        s = online_add(a, b, delay)
        assert len(s) == 9 + delay
        assert s.start == 4 + delay
        assert decode(s) == (exact(a) + exact(b)) / 2
        assert decode(s.prefix(10)) == decode(s)


def test_reduce_tree(rng):
    for m in (1, 2, 3, 5, 8, 9):
        streams = [DigitStream.from_array(random_sd(rng, 6)) for _ in range(m)]
        out, scale = reduce_tree(streams)
        assert scale == 2 ** tree_depth(m)
        assert decode(out) * scale == sum(exact(s) for s in streams)
        assert out.start == 2 * tree_depth(m)


def test_tree_depth():
    assert [tree_depth(m) for m in (1, 2, 3, 4, 5, 25, 6, 96)] == [0, 1, 2, 2, 3, 5, 3, 7]
