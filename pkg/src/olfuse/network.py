"""Layer geometry, network descriptions and the ``.net`` text format.

A ``.net`` file holds one ``name`` line and one line per layer::

    # comments start with '#'
    name lenet5
    conv K=5 S=1 N=1 M=6 IFM=32 relu=1
    pool K=2 S=2 N=6 IFM=28

``M`` is required for ``conv`` and defaults to ``N`` for ``pool``; ``relu``
defaults to 1 for ``conv`` and 0 for ``pool``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ContractError, NetworkError


class LayerKind(enum.Enum):
    CONV = "conv"
    POOL = "pool"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    K: int
    S: int
    N: int
    IFM: int
    M: int | None = None
    has_relu: bool = False

    def __post_init__(self):
        if self.M is None:
            if self.kind is LayerKind.CONV:
                raise ContractError("conv layers need an output channel count M")
            object.__setattr__(self, "M", self.N)
        if self.kind is LayerKind.POOL and self.M != self.N:
            raise ContractError("pooling keeps the channel count (M must equal N)")
        for name in ("K", "S", "N", "M", "IFM"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.IFM < self.K:
            raise ContractError(f"IFM={self.IFM} is smaller than kernel K={self.K}")
        if (self.IFM - self.K) % self.S:
            raise ContractError(
                f"(IFM - K) = {self.IFM - self.K} is not a multiple of stride {self.S}")

    @property
    def OFM(self) -> int:
        return (self.IFM - self.K) // self.S + 1

    @property
    def is_conv(self) -> bool:
        return self.kind is LayerKind.CONV

    @property
    def weight_count(self) -> int:
        return self.M * self.N * self.K * self.K if self.is_conv else 0

    def describe(self) -> str:
        extra = f" M={self.M} relu={int(self.has_relu)}" if self.is_conv else ""
        return f"{self.kind.value} K={self.K} S={self.S} N={self.N} IFM={self.IFM}{extra}"


@dataclass(frozen=True)
class Level:
    """One pyramid level: a conv layer and the pool layer that may follow it."""

    index: int
    conv: LayerSpec
    pool: LayerSpec | None = None
    conv_pos: int = 0

    @property
    def out_size(self) -> int:
        return self.pool.OFM if self.pool else self.conv.OFM

    @property
    def layers(self) -> tuple:
        return (self.conv,) if self.pool is None else (self.conv, self.pool)


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    layers: tuple = field(default_factory=tuple)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise NetworkError(f"network {self.name!r} has no layers")
        for i, (a, b) in enumerate(zip(layers, layers[1:])):
            if a.OFM != b.IFM or a.M != b.N:
                raise NetworkError(
                    f"layer {i + 1} ({a.kind.value}) produces {a.M}x{a.OFM}x{a.OFM} but "
                    f"layer {i + 2} ({b.kind.value}) expects {b.N}x{b.IFM}x{b.IFM}")

    def levels(self, q: int | None = None) -> list:
        """Group layers into conv levels; the first ``q`` levels if given."""
        out = []
        i = 0
        layers = self.layers
        if layers[0].kind is not LayerKind.CONV:
            raise ContractError("the first layer of a fusion chain must be a conv layer")
        while i < len(layers):
            conv = layers[i]
            if conv.kind is not LayerKind.CONV:
                raise ContractError(f"layer {i + 1}: two pooling layers in a row are not supported")
            pool = None
            if i + 1 < len(layers) and layers[i + 1].kind is LayerKind.POOL:
                pool = layers[i + 1]
            out.append(Level(len(out), conv, pool, i))
            i += 2 if pool else 1
        if q is not None:
            if q < 1:
                raise ContractError("Q must be >= 1")
            if q > len(out):
                raise ContractError(f"Q={q} exceeds the {len(out)} conv layers of {self.name}")
            out = out[:q]
        return out

    @property
    def conv_count(self) -> int:
        return sum(1 for l in self.layers if l.is_conv)

    def chain(self, q: int) -> list:
        """Every layer (conv and pool) covered by the first ``q`` levels."""
        return [l for lv in self.levels(q) for l in lv.layers]

    def sub(self, first_level: int, q: int) -> "NetworkSpec":
        lv = self.levels()[first_level:first_level + q]
        return NetworkSpec(f"{self.name}[{first_level}:{first_level + q}]",
                           tuple(l for v in lv for l in v.layers))

    def to_text(self) -> str:
        return "\n".join([f"name {self.name}"] + [l.describe() for l in self.layers]) + "\n"


_INT_KEYS = ("K", "S", "N", "M", "IFM", "relu")


def parse_network(text: str) -> NetworkSpec:
    """Parse the ``.net`` format; errors carry line and column."""
    name = None
    layers = []
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        tokens = []
        col = 0
        for tok in body.split():
            col = body.index(tok, col)
            tokens.append((tok, col + 1))
            col += len(tok)
        head, hcol = tokens[0]
        if head == "name":
            if len(tokens) != 2:
                raise NetworkError("expected 'name <identifier>'", lineno, hcol)
            if name is not None:
                raise NetworkError("duplicate 'name' line", lineno, hcol)
            name = tokens[1][0]
            continue
        try:
            kind = LayerKind(head)
        except ValueError:
            raise NetworkError(f"unknown layer kind {head!r} (expected conv or pool)",
                               lineno, hcol) from None
        fields = {}
        for tok, tcol in tokens[1:]:
            key, eq, val = tok.partition("=")
            if not eq or key not in _INT_KEYS:
                raise NetworkError(f"expected KEY=VALUE with KEY in {', '.join(_INT_KEYS)}, "
                                   f"got {tok!r}", lineno, tcol)
            if key in fields:
                raise NetworkError(f"duplicate key {key}", lineno, tcol)
            try:
                fields[key] = int(val)
            except ValueError:
                raise NetworkError(f"{key} must be an integer, got {val!r}",
                                   lineno, tcol + len(key) + 1) from None
        for key in ("K", "S", "N", "IFM") + (("M",) if kind is LayerKind.CONV else ()):
            if key not in fields:
                raise NetworkError(f"{kind.value} layer is missing {key}", lineno, hcol)
        relu = fields.pop("relu", 1 if kind is LayerKind.CONV else 0)
        try:
            layer = LayerSpec(kind, fields["K"], fields["S"], fields["N"], fields["IFM"],
                              fields.get("M"), bool(relu))
        except ContractError as exc:
            raise NetworkError(str(exc), lineno, hcol) from None
        layers.append(layer)
        lines.append(lineno)
    if name is None and not layers:
        raise NetworkError("empty network description", 1, 1)
    if name is None:
        raise NetworkError("missing 'name' line", 1, 1)
    if not layers:
        raise NetworkError(f"network {name!r} has no layers", 1, 1)
    for i, (a, b) in enumerate(zip(layers, layers[1:])):
        if a.OFM != b.IFM or a.M != b.N:
            raise NetworkError(
                f"layer {i + 2} ({b.kind.value}, line {lines[i + 1]}) expects "
                f"{b.N}x{b.IFM}x{b.IFM} but layer {i + 1} ({a.kind.value}, line {lines[i]}) "
                f"produces {a.M}x{a.OFM}x{a.OFM}", lines[i + 1])
    return NetworkSpec(name, tuple(layers))


BUNDLED = ("lenet5", "alexnet-front", "vgg16-front")


def bundled_network(name: str) -> NetworkSpec:
    if name not in BUNDLED:
        raise NetworkError(f"no bundled network {name!r}; choose from {', '.join(BUNDLED)}")
    text = resources.files("olfuse").joinpath("networks", f"{name}.net").read_text()
    return parse_network(text)


def load_network(ref: str) -> NetworkSpec:
    """Bundled name or path to a ``.net`` file."""
    if ref in BUNDLED:
        return bundled_network(ref)
    path = Path(ref)
    if not path.is_file():
        raise FileNotFoundError(f"network file not found: {ref}")
    return parse_network(path.read_text())
