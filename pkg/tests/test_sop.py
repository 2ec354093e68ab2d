from fractions import Fraction

import numpy as np
import pytest

from olfuse import kernels
from olfuse.digits import DigitStream, OnlineDelays, decode, encode_fixed
from olfuse.errors import ContractError
from olfuse.sop import (EndState, EndStatus, Kernel, Window, decode_batch, end_finish, end_run,
                        end_step, maxpool, ppu_compute, relu, spatial_sop, temporal_sop,
                        wpu_spatial, wpu_temporal)

from conftest import random_sd


def rand_window(rng, k, n):
    return [[Fraction(int(rng.integers(-(1 << n) + 1, 1 << n)), 1 << n) for _ in range(k)]
            for _ in range(k)]


def test_end_step_registers():
    s = end_step(EndState(), 1)
    s = end_step(s, -1)
    assert (s.zplus, s.zminus) == ((1, 0), (0, 1))
    assert s.status is EndStatus.RUNNING
    s = end_step(end_step(EndState(), 0), -1)
    assert s.status is EndStatus.TERMINATED and s.terminated_at == 2
    with pytest.raises(ContractError):
        end_step(s, 0)


def test_end_finish_classes():
    assert end_run(DigitStream.zeros(5)).status is EndStatus.UNDETERMINED
    assert end_run(DigitStream((0, 1, -1, 0))).status is EndStatus.COMPLETED_POSITIVE
    # 1 -1 -1: positive prefix, then 1/2 - 1/4 - 1/8 > 0 stays positive
    assert end_run(DigitStream((1, -1, -1))).status is EndStatus.COMPLETED_POSITIVE
    st = end_run(DigitStream((0, 0, 0, -1, 1, 1)))
    assert st.status is EndStatus.TERMINATED and st.terminated_at == 4


def test_end_scalar_matches_batch(rng):
    z = random_sd(rng, (3000, 10))
    term, _ = kernels.end_scan(z)
    for row, t in zip(z, term):
        st = end_run(DigitStream.from_array(row))
        assert (st.terminated_at or 0) == t
        v = decode(DigitStream.from_array(row))
        assert (st.status is EndStatus.TERMINATED) == (v < 0)
        assert (st.status is EndStatus.UNDETERMINED) == (v == 0)


@pytest.mark.parametrize("k,nch", [(1, 1), (3, 1), (3, 2), (5, 3)])
def test_spatial_sop_exact(rng, k, nch):
    n = 6
    p, m = 4, 2
    xs = rng.integers(-(1 << n) + 1, 1 << n, size=(p, nch, k * k))
    ws = rng.integers(-(1 << n) + 1, 1 << n, size=(m, nch, k * k))
    xd = kernels.encode_binary(xs.ravel(), n).reshape(p, nch, k * k, n)
    z, latency, exp = spatial_sop(xd, ws, n, 2 * n, OnlineDelays())
    got = decode_batch(z)
    want = np.einsum("pck,mck->pm", xs, ws)
    assert np.array_equal(got, want * 2 ** (z.shape[-1] - 2 * n - exp))


def test_temporal_matches_spatial(rng):
    n = 8
    p, nch, k, m = 6, 3, 3, 4
    xs = rng.integers(-255, 256, size=(p, nch, k * k))
    ws = rng.integers(-255, 256, size=(m, nch, k * k))
    xd = kernels.encode_binary(xs.ravel(), n).reshape(p, nch, k * k, n)
    zs, _, es = spatial_sop(xd, ws, n, 2 * n, OnlineDelays())
    zt, lat, et = temporal_sop(xd, ws, n, OnlineDelays())
    vs = [Fraction(int(v), 2 ** zs.shape[-1]) * 2 ** es for v in decode_batch(zs).ravel()]
    vt = [Fraction(int(v), 2 ** zt.shape[-1]) * 2 ** et for v in decode_batch(zt).ravel()]
    assert vs == vt
    assert lat == 9 * (2 + 7 + 1) + 2 * 2


def test_wpu_and_ppu_scalar(rng):
    n = 8
    wins = [rand_window(rng, 5, n) for _ in range(2)]
    kers = [rand_window(rng, 5, n) for _ in range(2)]
    true = sum(a * b for w, k in zip(wins, kers) for ra, rb in zip(w, k) for a, b in zip(ra, rb))
    W = [Window.from_values(w, n) for w in wins]
    K = [Kernel.from_values(k, n) for k in kers]
    s, scale = wpu_spatial(W[0], K[0])
    one = sum(a * b for ra, rb in zip(wins[0], kers[0]) for a, b in zip(ra, rb))
    assert decode(s) * scale == one
    assert s.start == 2 + 2 * 5
    t, scale = wpu_temporal(W[0], K[0])
    assert decode(t) * scale == one
    for design in ("ds1", "ds2"):
        off = ppu_compute(W, K, end_enabled=False, design=design)
        assert off.value == true and off.end_status is None
        on = ppu_compute(W, K, end_enabled=True, design=design)
        assert on.relu_value == relu(true)
        if true < 0:
            assert on.end_status is EndStatus.TERMINATED
            assert on.cycles_used < off.cycles_used


def test_ppu_contract_errors():
    w = Window.from_values([[0]], 4)
    k3 = Kernel.from_values([[0] * 3] * 3, 4)
    with pytest.raises(ContractError):
        ppu_compute([w], [k3])
    with pytest.raises(ContractError):
        ppu_compute([], [])
    with pytest.raises(ContractError):
        ppu_compute([w], [Kernel.from_values([[0]], 4)], design="ds3")


def test_relu_and_maxpool():
    assert relu(Fraction(-1, 3)) == 0 and relu(Fraction(1, 3)) == Fraction(1, 3)
    tile = np.arange(16).reshape(4, 4)
    assert maxpool(tile, 2, 2).tolist() == [[5, 7], [13, 15]]
    assert maxpool(tile, 3, 1).tolist() == [[10, 11], [14, 15]]
    with pytest.raises(ContractError):
        maxpool(tile, 3, 2)
