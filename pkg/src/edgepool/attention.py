"""Squeeze-and-excitation channel attention."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    Parameter,
    ShapeError,
    Tensor,
    _t,
    fully_connected,
    global_avg_pool,
    mul_channelwise,
    relu,
    sigmoid,
)

__all__ = ["SEParams", "se_weights", "se_forward", "bottleneck_width"]


def bottleneck_width(channels: int, reduction: int) -> int:
    return max(1, channels // reduction)


@dataclass
class SEParams:
    w1: Parameter  # (C/r, C)
    b1: Parameter
    w2: Parameter  # (C, C/r)
    b2: Parameter

    @classmethod
    def init(cls, channels: int, reduction: int = 16, rng=None, dtype=np.float64, prefix: str = "se"):
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases."""
        if reduction < 1:
            raise ValueError(f"SE reduction must be >= 1, got {reduction}")
        rng = np.random.default_rng(rng)
        hidden = bottleneck_width(channels, reduction)
        lim1, lim2 = 1 / np.sqrt(channels), 1 / np.sqrt(hidden)
        return cls(
            w1=Parameter(rng.uniform(-lim1, lim1, (hidden, channels)), f"{prefix}.w1", dtype),
            b1=Parameter(np.zeros(hidden), f"{prefix}.b1", dtype),
            w2=Parameter(rng.uniform(-lim2, lim2, (channels, hidden)), f"{prefix}.w2", dtype),
            b2=Parameter(np.zeros(channels), f"{prefix}.b2", dtype),
        )

    @property
    def channels(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]


def se_weights(x, p: SEParams) -> Tensor:
    """Per-sample channel weights in (0, 1), shape (N, C)."""
    x = _t(x)
    if x.ndim != 4 or x.shape[1] != p.channels:
        raise ShapeError(f"se: input {x.shape} does not have {p.channels} channels on axis 1")
    squeezed = global_avg_pool(x)
    hidden = relu(fully_connected(squeezed, p.w1, p.b1))
    return sigmoid(fully_connected(hidden, p.w2, p.b2))


def se_forward(x, p: SEParams) -> Tensor:
    x = _t(x)
    return mul_channelwise(x, se_weights(x, p))
