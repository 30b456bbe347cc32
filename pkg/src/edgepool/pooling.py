"""Pooling variants: plain, blur (anti-aliased), LGCA and WADCA.

LGCA and WADCA share one pipeline and differ only in how the input is split
into a low- and a high-frequency branch:

    branches -> concat (2C) -> SE attention -> 1x1 conv + ReLU (C) -> terminal pool

LGCA splits with a fixed Gaussian blur and its residual; WADCA with
approximate-only and detail-only Haar reconstructions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .attention import SEParams, se_forward
from .filters import gaussian_blur, gaussian_kernel
from .haar import approx_recon, detail_recon
from .tensor import (
    Parameter,
    ShapeError,
    Tensor,
    _t,
    avgpool2d,
    concat_channels,
    conv2d,
    maxpool2d,
    relu,
    sub,
    subsample,
)

__all__ = [
    "PoolKind",
    "PoolingVariant",
    "PoolingLayerParams",
    "terminal_pool",
    "normal_pool",
    "blur_pool",
    "lgca_branches",
    "wadca_branches",
    "lgca_pool",
    "wadca_pool",
    "pool_dispatch",
    "PoolingLayer",
]


class PoolKind(str, Enum):
    NORMAL = "normal"
    BLUR = "blur"
    LGCA = "lgca"
    WADCA = "wadca"

    @property
    def learnable(self) -> bool:
        return self in (PoolKind.LGCA, PoolKind.WADCA)


@dataclass(frozen=True)
class PoolingVariant:
    kind: PoolKind = PoolKind.NORMAL
    terminal: str = "max"
    stride: int = 2
    gaussian_size: int = 5

    def __post_init__(self):
        object.__setattr__(self, "kind", PoolKind(self.kind))
        if self.terminal not in ("max", "avg"):
            raise ValueError(f"terminal pooling must be 'max' or 'avg', got {self.terminal!r}")
        if self.stride < 1:
            raise ValueError(f"pooling stride must be >= 1, got {self.stride}")
        gaussian_kernel(self.gaussian_size)  # validates

    @property
    def tag(self) -> str:
        return self.kind.value

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "terminal": self.terminal, "stride": self.stride,
                "gaussian_size": self.gaussian_size}


@dataclass
class PoolingLayerParams:
    """SE attention over 2C channels plus the pointwise 2C -> C reduction."""

    se: SEParams
    reduce_w: Parameter  # (C, 2C, 1, 1)
    reduce_b: Parameter

    @classmethod
    def init(cls, channels: int, reduction: int = 16, rng=None, dtype=np.float64,
             prefix: str = "pool", scheme: str = "selection"):
        """Build layer parameters.

        ``scheme="selection"`` starts the reduction as the branch sum, so with
        attention weights near 0.5 the layer passes roughly x/2.
        ``scheme="random"`` uses uniform(+-1/sqrt(2C)).
        """
        rng = np.random.default_rng(rng)
        se = SEParams.init(2 * channels, reduction, rng, dtype, prefix=f"{prefix}.se")
        if scheme == "selection":
            w = np.zeros((channels, 2 * channels, 1, 1))
            idx = np.arange(channels)
            w[idx, idx, 0, 0] = 1.0
            w[idx, idx + channels, 0, 0] = 1.0
        elif scheme == "random":
            lim = 1 / np.sqrt(2 * channels)
            w = rng.uniform(-lim, lim, (channels, 2 * channels, 1, 1))
        else:
            raise ValueError(f"unknown reduction init scheme {scheme!r}")
        return cls(se, Parameter(w, f"{prefix}.reduce_w", dtype), Parameter(np.zeros(channels), f"{prefix}.reduce_b", dtype))

    @property
    def channels(self) -> int:
        return self.reduce_w.shape[0]

    def parameters(self) -> list[Parameter]:
        return [*self.se.parameters(), self.reduce_w, self.reduce_b]


def terminal_pool(x, variant: PoolingVariant) -> Tensor:
    s = variant.stride
    return maxpool2d(x, s, s) if variant.terminal == "max" else avgpool2d(x, s, s)


def _check_spatial(x: Tensor, variant: PoolingVariant, stage: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{stage}: expected (N, C, H, W), got {x.shape}")
    if min(x.shape[2:]) < variant.stride:
        raise ShapeError(f"{stage}: spatial size {x.shape[2:]} smaller than stride {variant.stride}")


def normal_pool(x, variant: PoolingVariant = PoolingVariant()) -> Tensor:
    x = _t(x)
    _check_spatial(x, variant, "normal_pool")
    return terminal_pool(x, variant)


def blur_pool(x, variant: PoolingVariant = PoolingVariant(kind=PoolKind.BLUR)) -> Tensor:
    """Anti-aliased pooling.

    max terminal: dense 2x2 max (stride 1) -> blur -> subsample.
    avg terminal: blur -> average pooling at the stride.
    """
    x = _t(x)
    _check_spatial(x, variant, "blur_pool")
    kernel = gaussian_kernel(variant.gaussian_size)
    if variant.terminal == "max":
        dense = maxpool2d(x, 2, 1)
        return subsample(gaussian_blur(dense, kernel), variant.stride)
    return avgpool2d(gaussian_blur(x, kernel), variant.stride, variant.stride)


def lgca_branches(x, variant: PoolingVariant) -> tuple[Tensor, Tensor]:
    """(Gaussian, Laplacian) branches; they sum to ``x``."""
    kernel = gaussian_kernel(variant.gaussian_size)
    g = gaussian_blur(x, kernel)
    return g, sub(x, g)


def wadca_branches(x) -> tuple[Tensor, Tensor]:
    """(approximate, detail) Haar reconstructions; they sum to ``x``."""
    return approx_recon(x, pad_odd=True), detail_recon(x, pad_odd=True)


def _attend_reduce_pool(low: Tensor, high: Tensor, params: PoolingLayerParams, variant: PoolingVariant,
                        stage: str) -> Tensor:
    cat = concat_channels(low, high)
    if cat.shape[1] != params.se.channels:
        raise ShapeError(f"{stage}/attention: concatenated input has {cat.shape[1]} channels, "
                         f"SE expects {params.se.channels}")
    attended = se_forward(cat, params.se)
    reduced = relu(conv2d(attended, params.reduce_w, params.reduce_b))
    return terminal_pool(reduced, variant)


def _check_layer(x: Tensor, params: PoolingLayerParams, variant: PoolingVariant, stage: str) -> None:
    _check_spatial(x, variant, stage)
    if x.shape[1] != params.channels:
        raise ShapeError(f"{stage}/input: tensor has {x.shape[1]} channels, layer built for {params.channels}")


def lgca_pool(x, params: PoolingLayerParams, variant: PoolingVariant) -> Tensor:
    x = _t(x)
    _check_layer(x, params, variant, "lgca")
    if min(x.shape[2:]) < variant.gaussian_size:
        raise ShapeError(f"lgca/blur: spatial size {x.shape[2:]} smaller than kernel {variant.gaussian_size}")
    g, lap = lgca_branches(x, variant)
    return _attend_reduce_pool(g, lap, params, variant, "lgca")


def wadca_pool(x, params: PoolingLayerParams, variant: PoolingVariant) -> Tensor:
    x = _t(x)
    _check_layer(x, params, variant, "wadca")
    a, d = wadca_branches(x)
    return _attend_reduce_pool(a, d, params, variant, "wadca")


def pool_dispatch(x, variant: PoolingVariant, params: PoolingLayerParams | None = None) -> Tensor:
    kind = variant.kind
    if kind.learnable and params is None:
        raise ValueError(f"{kind.value} pooling needs layer parameters")
    if not kind.learnable and params is not None:
        raise ValueError(f"{kind.value} pooling takes no parameters")
    if kind is PoolKind.NORMAL:
        return normal_pool(x, variant)
    if kind is PoolKind.BLUR:
        return blur_pool(x, variant)
    if kind is PoolKind.LGCA:
        return lgca_pool(x, params, variant)
    return wadca_pool(x, params, variant)


@dataclass
class PoolingLayer:
    """A pooling variant bundled with its parameters (if any)."""

    variant: PoolingVariant
    params: PoolingLayerParams | None = field(default=None)

    @classmethod
    def build(cls, variant: PoolingVariant, channels: int, reduction: int = 16, rng=None,
              dtype=np.float64, prefix: str = "pool", init: str = "selection"):
        params = None
        if variant.kind.learnable:
            params = PoolingLayerParams.init(channels, reduction, rng, dtype, prefix, init)
        return cls(variant, params)

    def parameters(self) -> list[Parameter]:
        return self.params.parameters() if self.params is not None else []

    def __call__(self, x) -> Tensor:
        return pool_dispatch(x, self.variant, self.params)
