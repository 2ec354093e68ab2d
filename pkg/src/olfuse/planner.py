"""Fusion-pyramid tile sizes, tile strides and uniform-movement plans."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import ContractError, PlanningError
from .network import NetworkSpec


@dataclass(frozen=True)
class TileSizeMatrix:
    """Admissible tile sizes: ``rows[i][j]`` is the conv-``j`` input tile for
    a final output region of side ``regions[i]``."""

    q: int
    regions: tuple
    rows: tuple

    def row(self, region: int) -> tuple:
        try:
            return self.rows[self.regions.index(region)]
        except ValueError:
            raise PlanningError(
                f"output region {region} is not admissible; choose from {list(self.regions)}"
            ) from None


def back_project(size: int, K: int, S: int) -> int:
    """Input extent needed to produce ``size`` outputs."""
    return (size - 1) * S + K


def tile_sizes(net: NetworkSpec, q: int) -> TileSizeMatrix:
    if q < 1:
        raise ContractError("Q must be >= 1")
    chain = net.chain(q)
    regions, rows = [], []
    for region in range(1, chain[-1].OFM + 1):
        d = region
        hs = []
        for layer in reversed(chain):
            d = back_project(d, layer.K, layer.S)
            if d > layer.IFM:
                break
            if layer.is_conv:
                hs.append(d)
        else:
            regions.append(region)
            rows.append(tuple(reversed(hs)))
    return TileSizeMatrix(q, tuple(regions), tuple(rows))


def movement_count(ifm: int, h: int, p: int) -> Fraction:
    """Tile placements per axis for tile side ``h`` moving by ``p``."""
    return Fraction(ifm - h, p) + 1


@dataclass(frozen=True)
class StrideCandidates:
    """Per level, every ``(tile_stride, alpha)`` with an integer ``alpha``."""

    per_level: tuple

    def alphas(self, j: int) -> set:
        return {a for _, a in self.per_level[j]}


def stride_candidates(H: Sequence[int], net: NetworkSpec) -> StrideCandidates:
    levels = net.levels(len(H))
    per_level = []
    for lv, h in zip(levels, H):
        if h > lv.conv.IFM:
            raise ContractError(f"tile {h} exceeds IFM {lv.conv.IFM}")
        cands = []
        for p in range(1, h + 1):
            alpha = movement_count(lv.conv.IFM, h, p)
            if alpha.denominator == 1:
                cands.append((p, int(alpha)))
        per_level.append(tuple(cands))
    return StrideCandidates(tuple(per_level))


@dataclass(frozen=True)
class FusionPlan:
    network: str
    q: int
    region: int
    alpha: int
    tile_sizes: tuple
    tile_strides: tuple

    @property
    def overlaps(self) -> tuple:
        return tuple(h - s for h, s in zip(self.tile_sizes, self.tile_strides))

    @property
    def steps(self) -> int:
        return self.alpha * self.alpha

    def ranges(self, j: int) -> list:
        """``[start, end)`` along one axis for every movement at level ``j``."""
        h, s = self.tile_sizes[j], self.tile_strides[j]
        return [(i * s, i * s + h) for i in range(self.alpha)]

    def to_dict(self) -> dict:
        return {
            "network": self.network,
            "q": self.q,
            "region": self.region,
            "alpha": self.alpha,
            "tile_sizes": list(self.tile_sizes),
            "tile_strides": list(self.tile_strides),
            "overlaps": list(self.overlaps),
            "ranges": [[list(r) for r in self.ranges(j)] for j in range(self.q)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FusionPlan":
        try:
            return cls(d["network"], int(d["q"]), int(d["region"]), int(d["alpha"]),
                       tuple(int(h) for h in d["tile_sizes"]),
                       tuple(int(s) for s in d["tile_strides"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractError(f"malformed plan: {exc}") from None


def _stride_ok(lv, h: int, p: int) -> bool:
    conv = lv.conv
    down = conv.S * (lv.pool.S if lv.pool else 1)
    return p <= h - conv.K + conv.S and p % down == 0


def select_uniform_plan(cands: StrideCandidates, H: Sequence[int], net: NetworkSpec,
                        region: int = 0) -> FusionPlan:
    """Smallest common alpha with a valid stride in every level; maximal strides."""
    q = len(H)
    levels = net.levels(q)
    common = set.intersection(*(cands.alphas(j) for j in range(q)))
    for alpha in sorted(common):
        strides = []
        for j, (lv, h) in enumerate(zip(levels, H)):
            if alpha == 1:
                strides.append(h)
                continue
            ok = [p for p, a in cands.per_level[j] if a == alpha and _stride_ok(lv, h, p)]
            if not ok:
                break
            strides.append(max(ok))
        else:
            return FusionPlan(net.name, q, region, alpha, tuple(H), tuple(strides))
    detail = "; ".join(
        f"level {j + 1} (H={h}): alpha in {sorted(cands.alphas(j))}" for j, h in enumerate(H))
    reason = "no alpha common to all levels" if not common else (
        f"common alphas {sorted(common)} violate coverage/alignment")
    raise PlanningError(f"{net.name}: {reason}; {detail}")


def plan_network(net: NetworkSpec, q: int, region: int | None = None) -> FusionPlan:
    """Plan for a given output region, or for the smallest region that admits one."""
    mat = tile_sizes(net, q)
    if not mat.regions:
        raise PlanningError(f"{net.name}: no admissible tile sizes for Q={q}")
    if region is not None:
        H = mat.row(region)
        return select_uniform_plan(stride_candidates(H, net), H, net, region)
    errors = []
    for r, H in zip(mat.regions, mat.rows):
        try:
            return select_uniform_plan(stride_candidates(H, net), H, net, r)
        except PlanningError as exc:
            errors.append(f"region {r}: {exc}")
    raise PlanningError(f"{net.name}: no region admits a uniform plan\n" + "\n".join(errors))


def all_plans(net: NetworkSpec, q: int) -> list:
    """Uniform plans for every admissible output region that has one."""
    mat = tile_sizes(net, q)
    plans = []
    for r, H in zip(mat.regions, mat.rows):
        try:
            plans.append(select_uniform_plan(stride_candidates(H, net), H, net, r))
        except PlanningError:
            pass
    return plans


def validate_plan(plan: FusionPlan, net: NetworkSpec) -> None:
    """Raise :class:`ContractError` unless ``plan`` is uniform and covering for ``net``."""
    levels = net.levels(plan.q)
    if len(plan.tile_sizes) != plan.q or len(plan.tile_strides) != plan.q:
        raise ContractError("plan lists the wrong number of levels")
    for j, (lv, h, s) in enumerate(zip(levels, plan.tile_sizes, plan.tile_strides)):
        ifm = lv.conv.IFM
        if not lv.conv.K <= h <= ifm:
            raise ContractError(f"level {j + 1}: tile {h} outside [K, IFM]")
        if movement_count(ifm, h, s) != plan.alpha:
            raise ContractError(
                f"level {j + 1}: alpha {movement_count(ifm, h, s)} != plan alpha {plan.alpha}"
                " (non-uniform plan)")
        if plan.alpha > 1 and not _stride_ok(lv, h, s):
            raise ContractError(f"level {j + 1}: tile stride {s} skips or misaligns pixels")
        if j + 1 < plan.q:
            nxt = forward_tile(lv, h)
            if nxt != plan.tile_sizes[j + 1]:
                raise ContractError(
                    f"level {j + 1} tile {h} produces {nxt}, level {j + 2} expects "
                    f"{plan.tile_sizes[j + 1]}")


def forward_tile(level, h: int) -> int:
    """Output side produced by one level from an input tile of side ``h``."""
    d = (h - level.conv.K) // level.conv.S + 1
    if level.pool:
        d = (d - level.pool.K) // level.pool.S + 1
    return d


def level_output_range(level, start: int, end: int) -> tuple:
    """Output ``[start, end)`` of a level for input rows ``[start, end)``."""
    c = level.conv
    a, b = start // c.S, (end - c.K) // c.S + 1
    if level.pool:
        p = level.pool
        a, b = -(-a // p.S), (b - p.K) // p.S + 1
    return a, b


def tile_indices(plan: FusionPlan, step: tuple) -> list:
    """Per level ``((row_start, row_end), (col_start, col_end))`` for a step."""
    r, c = step
    if not (0 <= r < plan.alpha and 0 <= c < plan.alpha):
        raise ContractError(f"step {step} outside [0, {plan.alpha})^2")
    return [(plan.ranges(j)[r], plan.ranges(j)[c]) for j in range(plan.q)]


def output_region(plan: FusionPlan, net: NetworkSpec, step: tuple) -> tuple:
    """Final-level output rows and cols produced at ``step``."""
    last = net.levels(plan.q)[-1]
    (rs, re), (cs, ce) = tile_indices(plan, step)[-1]
    return level_output_range(last, rs, re), level_output_range(last, cs, ce)
