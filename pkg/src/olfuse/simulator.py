"""Digit-accurate execution of a fused pyramid, with END statistics.

The reference semantics shared by the simulator and the oracle: activations
and weights are integers scaled by ``2**n``. A conv level computes
``floor(SOP / 2**(dK + dN) * 2**n)`` where ``SOP`` is the exact sum of
products and ``dK``, ``dN`` are the adder-tree depths over the window and
channels; then ReLU, then max pooling. The normalisation keeps every
activation in (-1, 1).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import kernels
from .cost import CycleParams, Design
from .digits import DigitStream, OnlineDelays, ParallelOperand, online_mul_sp, reduce_tree, tree_depth
from .errors import ContractError, RangeError, SimulationError
from .network import NetworkSpec
from .planner import FusionPlan, validate_plan
from .sop import decode_batch, spatial_sop, temporal_sop


@dataclass(frozen=True)
class FeatureMap:
    """``(C, H, W)`` activations as integers scaled by ``2**n``."""

    raw: np.ndarray
    n: int

    def __post_init__(self):
        raw = np.asarray(self.raw)
        if raw.ndim != 3:
            raise ContractError(f"feature map must be (C, H, W), got shape {raw.shape}")
        lim = 1 << self.n
        if raw.size and (raw.min() <= -lim or raw.max() >= lim):
            raise ContractError(f"feature map values leave (-1, 1) at precision {self.n}")
        object.__setattr__(self, "raw", raw.astype(np.int64))

    @property
    def shape(self) -> tuple:
        return self.raw.shape

    def value(self, c: int, i: int, j: int) -> Fraction:
        return Fraction(int(self.raw[c, i, j]), 1 << self.n)

    def __eq__(self, other):
        return (isinstance(other, FeatureMap) and self.n == other.n
                and np.array_equal(self.raw, other.raw))

    __hash__ = None


@dataclass
class LevelStats:
    """Per-level, per-filter END counters."""

    filters: int
    terminated: np.ndarray = None
    undetermined: np.ndarray = None
    positive: np.ndarray = None
    negative_census: np.ndarray = None

    def __post_init__(self):
        for name in ("terminated", "undetermined", "positive", "negative_census"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.filters, dtype=np.int64))

    def merge(self, other: "LevelStats") -> None:
        self.terminated += other.terminated
        self.undetermined += other.undetermined
        self.positive += other.positive
        self.negative_census += other.negative_census


@dataclass
class SimReport:
    network: str
    design: str
    end_enabled: bool
    n: int
    emit: int | None
    alpha: int
    images: int = 0
    cycles_per_image: int = 0
    effective_cycles_with_end: int = 0
    effective_cycles_without_end: int = 0
    energy_proxy_with: int = 0
    energy_proxy_without: int = 0
    levels: list = field(default_factory=list)

    @property
    def terminated_count(self) -> int:
        return int(sum(l.terminated.sum() for l in self.levels))

    @property
    def undetermined_count(self) -> int:
        return int(sum(l.undetermined.sum() for l in self.levels))

    @property
    def positive_count(self) -> int:
        return int(sum(l.positive.sum() for l in self.levels))

    @property
    def pixel_count(self) -> int:
        return self.terminated_count + self.undetermined_count + self.positive_count

    @property
    def savings_fraction(self) -> Fraction:
        if not self.effective_cycles_without_end:
            return Fraction(0)
        return 1 - Fraction(self.effective_cycles_with_end, self.effective_cycles_without_end)

    @property
    def total_cycles(self) -> int:
        return self.cycles_per_image * self.images

    def negative_fraction(self) -> list:
        """Per level, the fraction of each filter's pixels detected negative."""
        out = []
        for l in self.levels:
            total = l.terminated + l.undetermined + l.positive
            out.append([Fraction(int(t), int(s)) if s else Fraction(0)
                        for t, s in zip(l.terminated, total)])
        return out

    def merge(self, other: "SimReport") -> None:
        key = lambda r: (r.network, r.design, r.end_enabled, r.n, r.emit, r.alpha,
                         r.cycles_per_image)
        if key(self) != key(other):
            raise ContractError("cannot merge reports from different configurations")
        self.images += other.images
        self.effective_cycles_with_end += other.effective_cycles_with_end
        self.effective_cycles_without_end += other.effective_cycles_without_end
        self.energy_proxy_with += other.energy_proxy_with
        self.energy_proxy_without += other.energy_proxy_without
        if not self.levels:
            self.levels = [LevelStats(l.filters) for l in other.levels]
        for a, b in zip(self.levels, other.levels):
            a.merge(b)

    def to_dict(self) -> dict:
        return {
            "network": self.network,
            "design": self.design,
            "end": "on" if self.end_enabled else "off",
            "n": self.n,
            "emit": self.emit,
            "alpha": self.alpha,
            "images": self.images,
            "cycles_per_image": self.cycles_per_image,
            "effective_cycles_with_end": self.effective_cycles_with_end,
            "effective_cycles_without_end": self.effective_cycles_without_end,
            "savings_fraction": str(self.savings_fraction),
            "energy_proxy_with": self.energy_proxy_with,
            "energy_proxy_without": self.energy_proxy_without,
            "terminated": self.terminated_count,
            "undetermined": self.undetermined_count,
            "positive": self.positive_count,
            "levels": [
                {"terminated": l.terminated.tolist(), "undetermined": l.undetermined.tolist(),
                 "positive": l.positive.tolist(), "negative_census": l.negative_census.tolist()}
                for l in self.levels
            ],
        }


# --- reference ----------------------------------------------------------------

def _check_weights(net: NetworkSpec, weights, q: int, n: int) -> list:
    levels = net.levels(q)
    if len(weights) < q:
        raise ContractError(f"need weights for {q} conv levels, got {len(weights)}")
    out = []
    for lv, w in zip(levels, weights):
        w = np.asarray(w, dtype=np.int64)
        c = lv.conv
        if w.shape != (c.M, c.N, c.K, c.K):
            raise ContractError(f"level {lv.index + 1}: weights {w.shape} != "
                                f"{(c.M, c.N, c.K, c.K)}")
        if w.size and np.abs(w).max() >= 1 << n:
            raise RangeError(f"level {lv.index + 1}: weights leave (-1, 1) at precision {n}")
        out.append(w)
    return out


def _pool_int(a: np.ndarray, k: int, s: int) -> np.ndarray:
    c, h, w = a.shape
    oh, ow = (h - k) // s + 1, (w - k) // s + 1
    out = np.full((c, oh, ow), np.iinfo(np.int64).min, dtype=np.int64)
    for di in range(k):
        for dj in range(k):
            out = np.maximum(out, a[:, di:di + (oh - 1) * s + 1:s, dj:dj + (ow - 1) * s + 1:s])
    return out


def _shift(level, n: int) -> int:
    return n + tree_depth(level.conv.K ** 2) + tree_depth(level.conv.N)


def oracle_forward(net: NetworkSpec, fmap: FeatureMap, weights, q: int | None = None) -> list:
    """Exact integer forward pass; returns the output map of every level."""
    levels = net.levels(q)
    weights = _check_weights(net, weights, len(levels), fmap.n)
    x = fmap.raw
    first = levels[0].conv
    if x.shape != (first.N, first.IFM, first.IFM):
        raise ContractError(f"input {x.shape} does not match {(first.N, first.IFM, first.IFM)}")
    outs = []
    for lv, w in zip(levels, weights):
        c = lv.conv
        o = c.OFM
        # im2col via stride tricks, exact in int64
        win = np.lib.stride_tricks.sliding_window_view(x, (c.K, c.K), axis=(1, 2))
        win = win[:, ::c.S, ::c.S][:, :o, :o]
        sop = np.einsum("nijab,mnab->mij", win, w, dtype=np.int64, optimize=False)
        y = sop >> _shift(lv, fmap.n)
        if c.has_relu:
            y = np.maximum(y, 0)
        if lv.pool:
            y = _pool_int(y, lv.pool.K, lv.pool.S)
        outs.append(FeatureMap(y, fmap.n))
        x = y
    return outs


# --- timing -------------------------------------------------------------------

@lru_cache(maxsize=None)
def _ppu_output_start(design: str, K: int, N: int, n: int, t_in: int,
                      delays: OnlineDelays, acc: int) -> int:
    """Cycle at which a PPU's output stream starts, from stream timestamps.

    Zero-valued streams are pushed through the scalar units so the start
    times come from the same propagation rules the digit units use.
    """
    zero_x = DigitStream.zeros(n, t_in)
    zero_y = ParallelOperand(0, n)
    if design == "ds1":
        prod = online_mul_sp(zero_x, zero_y, 2 * n, delays.delta_olm)
        window, _ = reduce_tree([prod] * (K * K), delays.delta_ola)
        chans, _ = reduce_tree([window] * N, delays.delta_ola)
        return chans.start
    run = delays.delta_olm + (n - 1) + acc
    acc_stream = DigitStream.zeros(2 * n, t_in + K * K * run)
    chans, _ = reduce_tree([acc_stream] * N, delays.delta_ola)
    return chans.start


def pass_timing(net: NetworkSpec, q: int, design: str, params: CycleParams) -> list:
    """Per level ``(input_ready, output_start, next_ready)``; pass ends at the
    last ``next_ready`` plus ``n``."""
    delays = OnlineDelays(params.delta_olm, params.delta_ola)
    t = 0
    rows = []
    for lv in net.levels(q):
        out = _ppu_output_start(design, lv.conv.K, lv.conv.N, params.n, t, delays, params.acc)
        growth = tree_depth(lv.conv.N)
        if design == "ds1":
            growth += tree_depth(lv.conv.K ** 2)
        nxt = out + growth + (params.mp if lv.pool else 0)
        rows.append((t, out, nxt))
        t = nxt
    return rows


def simulated_pass_cycles(net: NetworkSpec, q: int, design: str, params: CycleParams) -> int:
    return pass_timing(net, q, design, params)[-1][2] + params.n


# --- fused execution ----------------------------------------------------------

def _windows(x: np.ndarray, rows: np.ndarray, cols: np.ndarray, K: int, S: int) -> np.ndarray:
    """``(P, N, K*K)`` input windows for conv output coordinates."""
    di = np.arange(K)
    r = rows[:, None] * S + di[None, :]
    c = cols[:, None] * S + di[None, :]
    win = x[:, r[:, :, None], c[:, None, :]]        # (N, P, K, K)
    return win.transpose(1, 0, 2, 3).reshape(len(rows), x.shape[0], K * K)


def _level_pixels(level, weights, x, rows, cols, n, design, emit, delays, acc, end_enabled,
                  stats: LevelStats):
    """Digit-serial outputs for a batch of conv pixels; returns values and cycle sums."""
    c = level.conv
    win = _windows(x, rows, cols, c.K, c.S)
    p = win.shape[0]
    xd = kernels.encode_binary(win.ravel(), n).reshape(p, c.N, c.K * c.K, n)
    w = weights.reshape(c.M, c.N, c.K * c.K)
    if design == "ds1":
        z, latency, _ = spatial_sop(xd, w, n, emit, delays)
    else:
        z, latency, _ = temporal_sop(xd, w, n, delays, acc)
    length = z.shape[-1]
    if length < n:
        raise SimulationError(f"PPU stream of {length} digits is shorter than precision {n}")
    vals = decode_batch(z)
    out = vals >> (length - n)
    if out.dtype == object:
        out = out.astype(np.int64)
    lim = 1 << n
    if np.any(out >= lim) or np.any(out < -lim):
        raise SimulationError(f"level {level.index + 1}: activation overflows precision {n}")
    flat = z.reshape(p * c.M, length)
    term, _ = kernels.end_scan(flat)
    term = term.reshape(p, c.M)
    negative = vals < 0
    zero = vals == 0
    stats.negative_census += negative.sum(axis=0).astype(np.int64)
    full = p * c.M * length
    if c.has_relu:
        terminated = term > 0
        if not np.array_equal(terminated, negative):
            raise SimulationError("END decision disagrees with the stream sign")
        used = int(np.where(terminated, term, length).sum())
        stats.terminated += terminated.sum(axis=0)
        stats.undetermined += zero.sum(axis=0)
        stats.positive += (~terminated & ~zero).sum(axis=0)
        if end_enabled:
            out = np.where(terminated, 0, out)
        out = np.maximum(out, 0)
    else:
        used = full
        stats.positive += (~zero).sum(axis=0)
        stats.undetermined += zero.sum(axis=0)
    active_with = used + p * c.M * latency
    active_without = full + p * c.M * latency
    return out, used, full, active_with, active_without


class _Buffer:
    """Activation buffer of one map plus its valid mask."""

    def __init__(self, c, h, w):
        self.data = np.zeros((c, h, w), dtype=np.int64)
        self.valid = np.zeros((h, w), dtype=bool)


def _run_one(net: NetworkSpec, fmap: FeatureMap, weights, plan: FusionPlan, design: str,
             end_enabled: bool, emit: int | None, params: CycleParams, report: SimReport):
    levels = net.levels(plan.q)
    n = fmap.n
    delays = OnlineDelays(params.delta_olm, params.delta_ola)
    if emit is None:
        emit = 2 * n
    first = levels[0].conv
    if fmap.shape != (first.N, first.IFM, first.IFM):
        raise ContractError(f"input {fmap.shape} does not match {(first.N, first.IFM, first.IFM)}")
    convbuf = [_Buffer(lv.conv.M, lv.conv.OFM, lv.conv.OFM) for lv in levels]
    outbuf = [convbuf[j] if lv.pool is None else _Buffer(lv.pool.M, lv.pool.OFM, lv.pool.OFM)
              for j, lv in enumerate(levels)]
    stats = [LevelStats(lv.conv.M) for lv in levels]
    inputs = [fmap.raw] + [b.data for b in outbuf[:-1]]
    in_valid = [np.ones((first.IFM, first.IFM), bool)] + [b.valid for b in outbuf[:-1]]
    used = full = act_w = act_wo = 0
    for sr in range(plan.alpha):
        for sc in range(plan.alpha):
            for j, lv in enumerate(levels):
                (r0, r1), (c0, c1) = plan.ranges(j)[sr], plan.ranges(j)[sc]
                if not in_valid[j][r0:r1, c0:c1].all():
                    raise SimulationError(
                        f"step ({sr}, {sc}) level {j + 1}: input tile rows [{r0},{r1}) cols "
                        f"[{c0},{c1}) not yet produced by level {j} (unsynchronised plan)")
                c = lv.conv
                orow = np.arange(r0 // c.S, (r1 - c.K) // c.S + 1)
                ocol = np.arange(c0 // c.S, (c1 - c.K) // c.S + 1)
                # offset the start when the tile start is not on the conv grid
                orow = orow[orow * c.S >= r0]
                ocol = ocol[ocol * c.S >= c0]
                cb = convbuf[j]
                rr, cc = np.meshgrid(orow, ocol, indexing="ij")
                todo = ~cb.valid[rr, cc]
                if todo.any():
                    pr, pc = rr[todo], cc[todo]
                    vals, u, f, aw, awo = _level_pixels(
                        lv, weights[j], inputs[j], pr, pc, n, design, emit, delays,
                        params.acc, end_enabled, stats[j])
                    cb.data[:, pr, pc] = vals.T
                    cb.valid[pr, pc] = True
                    used += u
                    full += f
                    act_w += aw
                    act_wo += awo
                if lv.pool is not None:
                    _pool_step(lv.pool, cb, outbuf[j])
    last = outbuf[-1]
    if not last.valid.all():
        missing = int((~last.valid).sum())
        raise SimulationError(f"plan left {missing} final output pixels uncomputed")
    report.images += 1
    report.effective_cycles_with_end += used
    report.effective_cycles_without_end += full
    report.energy_proxy_with += act_w
    report.energy_proxy_without += act_wo
    if not report.levels:
        report.levels = [LevelStats(s.filters) for s in stats]
    for a, b in zip(report.levels, stats):
        a.merge(b)
    return FeatureMap(last.data, n)


def _pool_step(pool, conv: _Buffer, out: _Buffer):
    """Pool every output whose window is fully available and not yet pooled."""
    k, s = pool.K, pool.S
    h = out.valid.shape[0]
    ready = np.ones((h, h), bool)
    for di in range(k):
        for dj in range(k):
            ready &= conv.valid[di:di + (h - 1) * s + 1:s, dj:dj + (h - 1) * s + 1:s]
    new = ready & ~out.valid
    if not new.any():
        return
    pooled = _pool_int(conv.data, k, s)
    out.data[:, new] = pooled[:, new]
    out.valid |= new


def _new_report(net, plan, design, end_enabled, emit, n, params) -> SimReport:
    return SimReport(net.name, design, end_enabled, n, emit if emit is not None else 2 * n,
                     plan.alpha, cycles_per_image=plan.alpha ** 2 *
                     simulated_pass_cycles(net, plan.q, design, params))


def _design(design) -> str:
    d = Design(design).value
    if d not in ("ds1", "ds2"):
        raise ContractError(f"the simulator models ds1 and ds2, not {d}")
    return d


def run_fused(net: NetworkSpec, fmap: FeatureMap, weights, plan: FusionPlan,
              design="ds1", end_enabled: bool = True, emit: int | None = None,
              params: CycleParams | None = None) -> tuple[FeatureMap, SimReport]:
    """Run one image through the fused pyramid.

    ``emit`` is the number of product digits each DS-1 multiplier emits
    (default ``2n``, the exact product).
    """
    design = _design(design)
    validate_plan(plan, net)
    params = params or CycleParams(n=fmap.n)
    if params.n != fmap.n:
        raise ContractError(f"cycle params use n={params.n}, feature map n={fmap.n}")
    weights = _check_weights(net, weights, plan.q, fmap.n)
    report = _new_report(net, plan, design, end_enabled, emit, fmap.n, params)
    out = _run_one(net, fmap, weights, plan, design, end_enabled, emit, params, report)
    return out, report


def _batch_worker(args):
    net, raws, n, weights, plan, design, end_enabled, emit, params = args
    report = _new_report(net, plan, design, end_enabled, emit, n, params)
    outs = []
    for raw in raws:
        outs.append(_run_one(net, FeatureMap(raw, n), weights, plan, design, end_enabled,
                             emit, params, report).raw)
    return outs, report


def run_batch(net: NetworkSpec, images: np.ndarray, n: int, weights, plan: FusionPlan,
              design="ds1", end_enabled: bool = True, emit: int | None = None,
              params: CycleParams | None = None, jobs: int = 1) -> tuple[list, SimReport]:
    """Run ``(I, C, H, W)`` images; results are reduced in image order."""
    design = _design(design)
    validate_plan(plan, net)
    params = params or CycleParams(n=n)
    weights = _check_weights(net, weights, plan.q, n)
    images = np.asarray(images, dtype=np.int64)
    if images.ndim != 4:
        raise ContractError(f"images must be (I, C, H, W), got {images.shape}")
    chunks = [images[i:i + 1] for i in range(len(images))]
    payload = [(net, ch, n, weights, plan, design, end_enabled, emit, params) for ch in chunks]
    if jobs > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_batch_worker, payload))
    else:
        results = [_batch_worker(p) for p in payload]
    report = _new_report(net, plan, design, end_enabled, emit, n, params)
    outs = []
    for o, r in results:
        outs.extend(FeatureMap(x, n) for x in o)
        report.merge(r)
    return outs, report


# --- statistics -----------------------------------------------------------------

@dataclass(frozen=True)
class EndSummary:
    per_filter_negative: list
    per_filter_undetermined: list
    mean_negative: Fraction
    mean_undetermined: Fraction


def end_stats(report: SimReport) -> EndSummary:
    """Detected-negative and undetermined percentages per filter and overall."""
    neg, und = [], []
    for l in report.levels:
        total = l.terminated + l.undetermined + l.positive
        neg.append([Fraction(100 * int(t), int(s)) if s else Fraction(0)
                    for t, s in zip(l.terminated, total)])
        und.append([Fraction(100 * int(u), int(s)) if s else Fraction(0)
                    for u, s in zip(l.undetermined, total)])
    flat_n = [v for row in neg for v in row]
    flat_u = [v for row in und for v in row]
    mean = lambda xs: sum(xs, Fraction(0)) / len(xs) if xs else Fraction(0)
    return EndSummary(neg, und, mean(flat_n), mean(flat_u))


def energy_proxy(with_end: SimReport, without_end: SimReport | None) -> Fraction:
    """Energy savings from paired END-on / END-off runs (active-cycle proxy)."""
    if without_end is None or with_end is None:
        raise ContractError("energy savings need both an END-on and an END-off report")
    if not with_end.end_enabled or without_end.end_enabled:
        raise ContractError("pass the END-on report first and the END-off report second")
    same = lambda r: (r.network, r.design, r.n, r.emit, r.alpha, r.images)
    if same(with_end) != same(without_end):
        raise ContractError("END-on and END-off reports come from different runs")
    if not without_end.energy_proxy_without:
        return Fraction(0)
    return 1 - Fraction(with_end.energy_proxy_with, without_end.energy_proxy_without)


# --- deterministic data ---------------------------------------------------------

def random_weights(net: NetworkSpec, q: int, n: int, seed: int) -> list:
    """Zero-mean uniform integer weights in (-2**n, 2**n)."""
    rng = np.random.default_rng(seed)
    lim = 1 << n
    return [rng.integers(-lim + 1, lim, size=(lv.conv.M, lv.conv.N, lv.conv.K, lv.conv.K),
                         dtype=np.int64) for lv in net.levels(q)]


def random_images(net: NetworkSpec, count: int, n: int, seed: int) -> np.ndarray:
    """Zero-mean images, uniform in (-1, 1) at precision n."""
    rng = np.random.default_rng(seed)
    c = net.levels(1)[0].conv
    lim = 1 << n
    return rng.integers(-lim + 1, lim, size=(count, c.N, c.IFM, c.IFM), dtype=np.int64)
