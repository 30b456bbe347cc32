"""Desk-scale classifier and convolutional autoencoder with pluggable pooling."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .pooling import PoolingLayer, PoolingVariant
from .tensor import (
    Parameter,
    ShapeError,
    Tensor,
    conv2d,
    conv_transpose2d,
    fully_connected,
    global_avg_pool,
    relu,
)

__all__ = ["ClassifierSpec", "CAESpec", "Classifier", "ConvAutoencoder", "build_classifier", "build_cae",
           "build_model", "spec_from_dict"]


def _variants(pooling, count: int) -> tuple[PoolingVariant, ...]:
    if isinstance(pooling, (PoolingVariant, dict, str)):
        pooling = [pooling] * count
    out = []
    for p in pooling:
        if isinstance(p, str):
            p = PoolingVariant(kind=p)
        elif isinstance(p, dict):
            p = PoolingVariant(**p)
        out.append(p)
    if len(out) != count:
        raise ValueError(f"expected {count} pooling variants, got {len(out)}")
    return tuple(out)


def _single(pooling):
    # a one-element sequence means "same variant everywhere"
    if isinstance(pooling, (list, tuple)) and len(pooling) == 1:
        return pooling[0]
    return pooling


class _SpecMixin:
    def to_dict(self) -> dict:
        d = asdict(self)
        d["pooling"] = [p.to_dict() for p in self.pooling]
        d["kind"] = self.kind
        return d

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class ClassifierSpec(_SpecMixin):
    """conv3x3+ReLU+pool per stage, then global average pool and a linear head."""

    in_channels: int = 3
    height: int = 32
    width: int = 32
    widths: tuple[int, ...] = (16, 32, 64)
    num_classes: int = 2
    pooling: Sequence = (PoolingVariant(),)
    se_reduction: int = 16
    pool_init: str = "selection"
    input_mean: float = 0.5
    input_std: float = 0.5

    kind = "classifier"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(self.widths))
        object.__setattr__(self, "pooling", _variants(_single(self.pooling), len(self.widths)))
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        down = int(np.prod([p.stride for p in self.pooling]))
        if self.height % down or self.width % down:
            raise ShapeError(f"input {self.height}x{self.width} not divisible by total pooling stride {down}")


@dataclass(frozen=True)
class CAESpec(_SpecMixin):
    """Encoder conv blocks with pooling after all but the last; mirrored decoder.

    The decoder upsamples with 2x2 stride-2 transposed convolutions back to
    the input size and ends in a linear 3x3 conv to ``in_channels``.
    """

    in_channels: int = 3
    height: int = 64
    width: int = 64
    widths: tuple[int, ...] = (48, 96, 192, 32)
    pooling: Sequence = (PoolingVariant(),)
    se_reduction: int = 16
    pool_init: str = "selection"
    input_mean: float = 0.5
    input_std: float = 0.5

    kind = "cae"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(self.widths))
        n_pools = len(self.widths) - 1
        if n_pools < 1:
            raise ValueError("CAE needs at least two encoder widths")
        object.__setattr__(self, "pooling", _variants(_single(self.pooling), n_pools))
        if any(p.stride != 2 for p in self.pooling):
            raise ValueError("CAE pooling stride must be 2 (decoder upsamples by 2)")
        down = 2 ** n_pools
        if self.height % down or self.width % down:
            raise ShapeError(f"input {self.height}x{self.width} not divisible by {down}")

    @property
    def bottleneck(self) -> tuple[int, int, int]:
        down = 2 ** len(self.pooling)
        return self.widths[-1], self.height // down, self.width // down


def spec_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind")
    cls = {"classifier": ClassifierSpec, "cae": CAESpec}[kind]
    return cls(**d)


def _conv_param(rng, cout, cin, k, name, dtype):
    lim = 1 / np.sqrt(cin * k * k)
    return (Parameter(rng.uniform(-lim, lim, (cout, cin, k, k)), f"{name}.w", dtype),
            Parameter(rng.uniform(-lim, lim, cout), f"{name}.b", dtype))


class _Model:
    spec: ClassifierSpec | CAESpec

    def __init__(self):
        self.params: dict[str, Parameter] = {}

    def _add(self, *ps: Parameter) -> None:
        for p in ps:
            if p.name in self.params:
                raise ValueError(f"duplicate parameter name {p.name}")
            self.params[p.name] = p

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    @property
    def variant_tag(self) -> str:
        tags = {p.tag for p in self.spec.pooling}
        return tags.pop() if len(tags) == 1 else "+".join(p.tag for p in self.spec.pooling)

    def normalize(self, images: np.ndarray) -> np.ndarray:
        return ((np.asarray(images) - self.spec.input_mean) / self.spec.input_std).astype(self.dtype, copy=False)

    def __call__(self, x) -> Tensor:
        return self.forward(x)


class Classifier(_Model):
    def __init__(self, spec: ClassifierSpec, seed: int = 0, dtype=np.float64):
        super().__init__()
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.convs: list[tuple[Parameter, Parameter]] = []
        self.pools: list[PoolingLayer] = []
        cin = spec.in_channels
        for i, (width, variant) in enumerate(zip(spec.widths, spec.pooling)):
            w, b = _conv_param(rng, width, cin, 3, f"stage{i}.conv", dtype)
            pool = PoolingLayer.build(variant, width, spec.se_reduction, rng, dtype, f"stage{i}.pool", spec.pool_init)
            self._add(w, b, *pool.parameters())
            self.convs.append((w, b))
            self.pools.append(pool)
            cin = width
        lim = 1 / np.sqrt(cin)
        self.head_w = Parameter(rng.uniform(-lim, lim, (spec.num_classes, cin)), "head.w", dtype)
        self.head_b = Parameter(np.zeros(spec.num_classes), "head.b", dtype)
        self._add(self.head_w, self.head_b)

    def features(self, x) -> Tensor:
        for (w, b), pool in zip(self.convs, self.pools):
            x = pool(relu(conv2d(x, w, b, padding=1)))
        return global_avg_pool(x)

    def forward(self, x) -> Tensor:
        """Logits (N, K) for normalized input (N, C, H, W)."""
        return fully_connected(self.features(x), self.head_w, self.head_b)


class ConvAutoencoder(_Model):
    def __init__(self, spec: CAESpec, seed: int = 0, dtype=np.float64):
        super().__init__()
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.enc: list[tuple[Parameter, Parameter]] = []
        self.pools: list[PoolingLayer] = []
        cin = spec.in_channels
        for i, width in enumerate(spec.widths):
            w, b = _conv_param(rng, width, cin, 3, f"enc{i}.conv", dtype)
            self._add(w, b)
            self.enc.append((w, b))
            if i < len(spec.pooling):
                pool = PoolingLayer.build(spec.pooling[i], width, spec.se_reduction, rng, dtype,
                                          f"enc{i}.pool", spec.pool_init)
                self._add(*pool.parameters())
                self.pools.append(pool)
            cin = width

        # mirror: bottleneck -> widths[-2] -> ... -> widths[0], each x2 upsampling
        self.dec: list[tuple[Parameter, Parameter]] = []
        targets = list(reversed(spec.widths[:-1]))
        for i, width in enumerate(targets):
            lim = 1 / np.sqrt(cin * 4)
            w = Parameter(rng.uniform(-lim, lim, (cin, width, 2, 2)), f"dec{i}.convt.w", dtype)
            b = Parameter(rng.uniform(-lim, lim, width), f"dec{i}.convt.b", dtype)
            self._add(w, b)
            self.dec.append((w, b))
            cin = width
        self.out_w, self.out_b = _conv_param(rng, spec.in_channels, cin, 3, "out.conv", dtype)
        self._add(self.out_w, self.out_b)

    def encode(self, x) -> Tensor:
        for i, (w, b) in enumerate(self.enc):
            x = relu(conv2d(x, w, b, padding=1))
            if i < len(self.pools):
                x = self.pools[i](x)
        return x

    def decode(self, z) -> Tensor:
        for w, b in self.dec:
            z = relu(conv_transpose2d(z, w, b, stride=2))
        return conv2d(z, self.out_w, self.out_b, padding=1)

    def forward(self, x) -> Tensor:
        return self.decode(self.encode(x))


def build_classifier(spec: ClassifierSpec, seed: int = 0, dtype=np.float64) -> Classifier:
    return Classifier(spec, seed, dtype)


def build_cae(spec: CAESpec, seed: int = 0, dtype=np.float64) -> ConvAutoencoder:
    return ConvAutoencoder(spec, seed, dtype)


def build_model(spec, seed: int = 0, dtype=np.float64):
    if isinstance(spec, dict):
        spec = spec_from_dict(spec)
    return build_classifier(spec, seed, dtype) if isinstance(spec, ClassifierSpec) else build_cae(spec, seed, dtype)
