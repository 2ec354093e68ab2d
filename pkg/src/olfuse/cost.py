"""Analytic operation counts, cycle models, DRAM traffic and operational intensity."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .digits import tree_depth
from .errors import ContractError
from .network import LayerSpec, NetworkSpec
from .planner import FusionPlan, validate_plan


class Design(enum.Enum):
    DS1 = "ds1"
    DS2 = "ds2"
    BASELINE = "baseline"


@dataclass(frozen=True)
class CycleParams:
    """Timing constants; defaults reproduce the LeNet DS-1 fused figure."""

    delta_olm: int = 2
    delta_ola: int = 2
    n: int = 8
    acc: int = 1
    mp: int = 2
    freq_hz: int = 100_000_000

    def __post_init__(self):
        for name in ("delta_olm", "delta_ola", "n", "acc", "freq_hz"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")
        if self.mp < 0:
            raise ContractError("mp must be non-negative")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("delta_olm", "delta_ola", "n", "acc", "mp", "freq_hz")}


@dataclass(frozen=True)
class CycleReport:
    design: Design
    total_cycles: int
    ops: int
    freq_hz: int
    alpha: int
    per_level: tuple = field(default=())

    @property
    def duration_s(self) -> Fraction:
        return Fraction(self.total_cycles, self.freq_hz)

    @property
    def duration_us(self) -> Fraction:
        return self.duration_s * 1_000_000

    @property
    def performance_ops_per_s(self) -> Fraction:
        return performance(self.ops, self.total_cycles, self.freq_hz)


@dataclass(frozen=True)
class TrafficModel:
    mode: str
    bytes_in: Fraction
    bytes_weights: Fraction
    bytes_out: Fraction

    @property
    def bytes_total(self) -> Fraction:
        return self.bytes_in + self.bytes_weights + self.bytes_out


def num_ops(layer: LayerSpec) -> int:
    if not layer.is_conv:
        raise ContractError("operation counts are defined for conv layers only")
    r = layer.OFM
    return 2 * layer.M * layer.N * r * r * layer.K * layer.K


def fused_ops(net: NetworkSpec, q: int) -> int:
    return sum(num_ops(lv.conv) for lv in net.levels(q))


def performance(ops: int, cycles: int, freq: int) -> Fraction:
    """Operations per second, exact."""
    if cycles <= 0:
        raise ContractError("cycle count must be positive")
    return Fraction(ops * freq, cycles)


def ds1_level_terms(level, params: CycleParams) -> dict:
    dk = tree_depth(level.conv.K * level.conv.K)
    dn = tree_depth(level.conv.N)
    return {
        "delta_olm": params.delta_olm,
        "window_tree_delay": params.delta_ola * dk,
        "channel_tree_delay": params.delta_ola * dn,
        "window_tree_growth": dk,
        "channel_tree_growth": dn,
        "maxpool": params.mp if level.pool else 0,
    }


def ds2_level_terms(level, params: CycleParams) -> dict:
    kk = level.conv.K * level.conv.K
    dn = tree_depth(level.conv.N)
    return {
        "product_accumulate": (params.delta_olm + params.n - 1 + params.acc) * kk,
        "channel_tree_delay": params.delta_ola * dn,
        "channel_tree_growth": dn,
        "maxpool": params.mp if level.pool else 0,
    }


def baseline_level_terms(level, params: CycleParams) -> dict:
    """Conventional LSB-first bit-serial level: the whole product must finish
    before the adder trees, and the next level waits for every bit."""
    dk = tree_depth(level.conv.K * level.conv.K)
    dn = tree_depth(level.conv.N)
    return {
        "serial_multiply": params.n,
        "window_tree": dk,
        "channel_tree": dn,
        "result_width": 2 * params.n + dk + dn,
        "maxpool": params.mp if level.pool else 0,
    }


def _pass_cycles(plan: FusionPlan, net: NetworkSpec, params: CycleParams,
                 design: Design, terms: Callable) -> CycleReport:
    validate_plan(plan, net)
    levels = net.levels(plan.q)
    per_level = tuple(terms(lv, params) for lv in levels)
    body = sum(sum(t.values()) for t in per_level) + params.n
    total = plan.alpha * plan.alpha * body
    return CycleReport(design, total, fused_ops(net, plan.q), params.freq_hz,
                       plan.alpha, per_level)


def cycles_ds1(plan: FusionPlan, net: NetworkSpec, params: CycleParams = CycleParams()) -> CycleReport:
    return _pass_cycles(plan, net, params, Design.DS1, ds1_level_terms)


def cycles_ds2(plan: FusionPlan, net: NetworkSpec, params: CycleParams = CycleParams()) -> CycleReport:
    return _pass_cycles(plan, net, params, Design.DS2, ds2_level_terms)


def cycles_baseline(plan: FusionPlan, net: NetworkSpec, params: CycleParams = CycleParams(),
                    level_terms: Callable = baseline_level_terms) -> CycleReport:
    """Hook for conventional designs: supply ``level_terms(level, params) -> dict``."""
    return _pass_cycles(plan, net, params, Design.BASELINE, level_terms)


def cycles_for(design, plan, net, params=CycleParams()) -> CycleReport:
    design = Design(design)
    return {Design.DS1: cycles_ds1, Design.DS2: cycles_ds2,
            Design.BASELINE: cycles_baseline}[design](plan, net, params)


def dram_traffic(net: NetworkSpec, q: int, plan: FusionPlan | None = None,
                 n: int = 8) -> TrafficModel:
    """Off-chip bytes for layer-by-layer execution (``plan=None``) or a fused plan.

    Layer-wise, every layer of the chain (pooling included) reads its input
    and writes its output. Fused, only first-level tiles are read (overlaps
    re-read), weights are fetched once and the final map written once.
    """
    chain = net.chain(q)
    bpv = Fraction(n, 8)
    weights = sum(l.weight_count for l in chain) * bpv
    last = chain[-1]
    if plan is None:
        bytes_in = sum(l.IFM * l.IFM * l.N for l in chain) * bpv
        bytes_out = sum(l.OFM * l.OFM * l.M for l in chain) * bpv
        return TrafficModel("layerwise", bytes_in, weights, bytes_out)
    if plan.q != q:
        raise ContractError(f"plan fuses {plan.q} levels, traffic requested for {q}")
    first = chain[0]
    h = plan.tile_sizes[0]
    bytes_in = plan.alpha * plan.alpha * h * h * first.N * bpv
    bytes_out = last.OFM * last.OFM * last.M * bpv
    return TrafficModel("fused", bytes_in, weights, bytes_out)


def operational_intensity(ops: int, traffic: TrafficModel) -> Fraction:
    if traffic.bytes_total <= 0:
        raise ContractError("traffic must be positive")
    return Fraction(ops) / traffic.bytes_total
