"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (``pytest tests/test_acceptance.py -s`` shows the lines
inline; they are also printed with capture disabled) or directly with
``python tests/test_acceptance.py``.
"""

import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from olfuse import kernels
from olfuse.cli import main as cli_main
from olfuse.cost import (CycleParams, cycles_ds1, cycles_ds2, dram_traffic, fused_ops,
                         operational_intensity, performance)
from olfuse.digits import OnlineDelays
from olfuse.network import bundled_network
from olfuse.planner import all_plans, movement_count, plan_network, stride_candidates
from olfuse.simulator import (FeatureMap, energy_proxy, oracle_forward, random_images,
                              random_weights, run_batch)
from olfuse.sop import decode_batch, spatial_sop

from conftest import SMALL_CONFIGS, small_net

N = 8
SEED = 2024
PUBLISHED_OI = {"lenet5": 8.20, "alexnet-front": 17.80, "vgg16-front": 279.40}


def _line(k, ok, detail):
    return f"criterion {k:2d} {'PASS' if ok else 'FAIL'}: {detail}"


def check_1():
    t = time.perf_counter()
    ks = np.arange(-(1 << N) + 1, 1 << N)
    x = kernels.encode_binary(ks, N)
    z, _, _ = kernels.mul_sp(np.repeat(x, len(ks), 0), np.tile(ks, len(ks)), N, 2 * N, 2)
    got = kernels.decode_scaled(z)
    want = np.repeat(ks, len(ks)) * np.tile(ks, len(ks))
    ok_frac = float(np.mean(got == want))
    dt = time.perf_counter() - t
    return ok_frac == 1.0 and dt < 60, (
        f"{len(want)} pairs, {ok_frac:.2%} exact at 16 digits, {dt:.2f}s ({kernels.BACKEND})")


def check_2():
    rng = np.random.default_rng(SEED)
    count = 10 ** 4
    xs = rng.integers(-(1 << N) + 1, 1 << N, size=count)
    ys = rng.integers(-(1 << N) + 1, 1 << N, size=count)
    z, _, _ = kernels.mul_sp(kernels.encode_binary(xs, N), ys, N, 2 * N, 2)
    true = xs * ys                       # units of 2**-16
    violations = 0
    for p in range(1, 2 * N + 1):
        pre = kernels.decode_scaled(np.ascontiguousarray(z[:, :p])) << (2 * N - p)
        # |prefix - product| < 2**-p  <=>  |diff| < 2**(16 - p) in product units
        violations += int(np.sum(np.abs(pre - true) >= (1 << (2 * N - p))))
    return violations == 0, f"{count} products x 16 prefixes, {violations} violations"


def check_3():
    rng = np.random.default_rng(SEED + 3)
    # PPU streams: K=3, N=2 windows with random emission lengths, plus raw digit strings
    streams = []
    for emit in (10, 13, 16):
        p = 25000 if emit == 16 else 12500
        xs = rng.integers(-(1 << N) + 1, 1 << N, size=(p, 2, 9))
        ws = rng.integers(-(1 << N) + 1, 1 << N, size=(1, 2, 9))
        xd = kernels.encode_binary(xs.ravel(), N).reshape(p, 2, 9, N)
        z, _, _ = spatial_sop(xd, ws, N, emit, OnlineDelays())
        streams.append(z[:, 0])
    raw = rng.integers(-1, 2, size=(50000, 24)).astype(np.int8)
    false_term = late = total = 0
    for z in streams + [raw]:
        z = np.ascontiguousarray(z)
        length = z.shape[1]
        term, _ = kernels.end_scan(z)
        vals = decode_batch(z).astype(object)      # units of 2**-length
        total += len(vals)
        false_term += int(np.sum((term > 0) & (vals >= 0)))
        for v, t in zip(vals[vals < 0], term[vals < 0]):
            # smallest p with v <= -2**-(p-1)
            mag = Fraction(-int(v), 2 ** length)
            p = 1
            while mag < Fraction(1, 2 ** (p - 1)):
                p += 1
            if t == 0 or t > p + 1:
                late += 1
    # END on vs off, full simulations
    net = bundled_network("lenet5")
    plan = plan_network(net, 2, 1)
    w = random_weights(net, 2, N, SEED + 31)
    x = random_images(net, 4, N, SEED + 32)
    equal = True
    for design in ("ds1", "ds2"):
        on, _ = run_batch(net, x, N, w, plan, design, True, emit=12 if design == "ds1" else None)
        off, _ = run_batch(net, x, N, w, plan, design, False, emit=12 if design == "ds1" else None)
        equal &= on == off
    ok = false_term == 0 and late == 0 and equal
    return ok, (f"{total} streams, {false_term} false terminations, {late} late/missed; "
                f"END on/off post-ReLU outputs identical: {equal}")


def check_4():
    net = bundled_network("lenet5")
    plan = plan_network(net, 2, 1)
    a12 = movement_count(32, 16, 12)
    cands = stride_candidates((16, 6), net)
    rejected = 12 not in [p for p, _ in cands.per_level[0]]
    ok = (plan.tile_sizes == (16, 6) and a12 == Fraction(7, 3) and rejected
          and plan.alpha == 5 and plan.tile_strides == (4, 2))
    return ok, (f"H={list(plan.tile_sizes)}, S^T=12 gives alpha={a12} (rejected={rejected}), "
                f"alpha={plan.alpha} with S^T={list(plan.tile_strides)}")


def check_5():
    net = bundled_network("lenet5")
    plan = plan_network(net, 2, 1)
    r1 = cycles_ds1(plan, net, CycleParams())
    r2 = cycles_ds2(plan, net, CycleParams(acc=1))
    # published LeNet op count; the unpadded geometry here counts fused_ops() = 715200
    gops = performance(1183880, r1.total_cycles, r1.freq_hz) / 10 ** 9
    dev = abs(r2.total_cycles - 12825) / 12825     # published DS-2 figure
    ok = (r1.total_cycles == 1375 and r1.duration_us == Fraction(1375, 100)
          and round(float(gops), 1) == 86.1 and dev <= 0.02)
    return ok, (f"DS-1 {r1.total_cycles} cycles = {float(r1.duration_us)} us, "
                f"{float(gops):.2f} GOPS; DS-2 {r2.total_cycles} vs 12825 ({dev:.2%})")


def check_6():
    agree = 0
    rows = []
    for k, nch, q in SMALL_CONFIGS:
        net = small_net(k, nch, q)
        plan = plan_network(net, q)
        w = random_weights(net, q, N, SEED + k)
        x = random_images(net, 1, N, SEED + nch)
        for design, model in (("ds1", cycles_ds1), ("ds2", cycles_ds2)):
            _, rep = run_batch(net, x, N, w, plan, design, end_enabled=False)
            want = model(plan, net).total_cycles
            agree += rep.cycles_per_image == want
            rows.append(rep.cycles_per_image == want)
    ok = all(rows) and len(SMALL_CONFIGS) >= 5
    return ok, f"{agree}/{len(rows)} (config, design) pairs agree over {len(SMALL_CONFIGS)} configs"


def check_7():
    t = time.perf_counter()
    net = bundled_network("lenet5")
    plan = plan_network(net, 2, 1)
    w = random_weights(net, 2, N, SEED + 7)
    x = random_images(net, 20, N, SEED + 8)
    refs = [oracle_forward(net, FeatureMap(xi, N), w)[-1].raw for xi in x]
    worst = {}
    for design, emit in (("ds1", N + 2), ("ds1", 2 * N), ("ds2", None)):
        outs, _ = run_batch(net, x, N, w, plan, design, False, emit=emit)
        worst[(design, emit)] = max(int(np.abs(o.raw - r).max()) for o, r in zip(outs, refs))
    dt = time.perf_counter() - t
    ok = (worst[("ds1", N + 2)] <= 2 and worst[("ds1", 2 * N)] == 0
          and worst[("ds2", None)] == 0 and dt < 300)
    return ok, (f"max |diff| in ulps (2^-{N}): emit={N + 2} -> {worst[('ds1', N + 2)]} (<= 2), "
                f"emit={2 * N} -> {worst[('ds1', 2 * N)]}, DS-2 -> {worst[('ds2', None)]}; "
                f"{dt:.1f}s")


def oi_table():
    rows = []
    for name, q in (("lenet5", 2), ("alexnet-front", 2), ("vgg16-front", 4)):
        net = bundled_network(name)
        ops = fused_ops(net, q)
        lw = operational_intensity(ops, dram_traffic(net, q))
        default = plan_network(net, q)
        best = max(all_plans(net, q), key=lambda p: operational_intensity(
            ops, dram_traffic(net, q, p)))
        oi_d = operational_intensity(ops, dram_traffic(net, q, default))
        oi_b = operational_intensity(ops, dram_traffic(net, q, best))
        rows.append((name, q, lw, default, oi_d, best, oi_b))
    return rows


def check_8():
    parts, ok = [], True
    for name, q, lw, default, oi_d, best, oi_b in oi_table():
        ok &= oi_b > lw
        parts.append(f"{name} Q={q}: best region {best.region} x{float(oi_b / lw):.2f}, "
                     f"smallest region {default.region} x{float(oi_d / lw):.2f} "
                     f"(published x{PUBLISHED_OI[name]:.2f})")
    return ok, "; ".join(parts)


def check_9():
    net = bundled_network("lenet5")
    plan = plan_network(net, 2, 1)
    w = random_weights(net, 2, N, SEED + 9)
    x = random_images(net, 100, N, SEED + 10)
    _, on = run_batch(net, x, N, w, plan, "ds1", True)
    _, off = run_batch(net, x, N, w, plan, "ds1", False)
    s = float(on.savings_fraction)
    e = float(energy_proxy(on, off))
    neg = on.terminated_count / on.pixel_count
    return 0.30 <= s <= 0.60, (f"cycle savings {s:.4f} (band [0.30, 0.60]), energy-proxy savings "
                               f"{e:.4f}, {neg:.2%} of activations terminated")


def check_10(tmpdir=None):
    import contextlib
    import io
    import tempfile

    outs = []
    with tempfile.TemporaryDirectory() as d:
        plan = Path(d) / "p.json"
        with contextlib.redirect_stderr(io.StringIO()):
            cli_main(["plan", "--net", "lenet5", "--q", "2", "--region", "1", "--out", str(plan)])
        for jobs in ("1", "1", "3"):
            out = Path(d) / f"r{len(outs)}.json"
            with contextlib.redirect_stderr(io.StringIO()):
                code = cli_main(["simulate", "--net", "lenet5", "--plan", str(plan),
                                 "--design", "ds1", "--end", "on", "--seed", "7",
                                 "--images", "10", "--jobs", jobs, "--out", str(out)])
            outs.append((code, out.read_bytes()))
    same = all(o == outs[0] for o in outs)
    images = json.loads(outs[0][1])["report"]["images"]
    return same and outs[0][0] == 0, (f"3 runs (jobs 1, 1, 3), {images} images each, "
                                      f"byte-identical: {same}")


CHECKS = [check_1, check_2, check_3, check_4, check_5, check_6, check_7, check_8, check_9,
          check_10]


@pytest.mark.parametrize("k", range(1, 11))
def test_criterion(k, capsys):
    ok, detail = CHECKS[k - 1]()
    with capsys.disabled():
        print("\n" + _line(k, ok, detail))
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for k, check in enumerate(CHECKS, 1):
        ok, detail = check()
        failed += not ok
        print(_line(k, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
