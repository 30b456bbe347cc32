"""Fixed binomial (Gaussian) smoothing and its Laplacian residual."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor import ShapeError, Tensor, _t, from_op, sub

_BINOMIAL_ROWS = {
    2: (1.0, 1.0),
    3: (1.0, 2.0, 1.0),
    5: (1.0, 4.0, 6.0, 4.0, 1.0),
}


@dataclass(frozen=True)
class GaussianKernel:
    """Normalized separable binomial kernel."""

    size: int
    row: np.ndarray

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.row, self.row)

    @property
    def pad(self) -> tuple[int, int]:
        before = (self.size - 1) // 2
        return before, self.size - 1 - before


def gaussian_kernel(size: int = 5) -> GaussianKernel:
    if size not in _BINOMIAL_ROWS:
        raise ValueError(f"gaussian kernel size must be one of {sorted(_BINOMIAL_ROWS)}, got {size}")
    row = np.array(_BINOMIAL_ROWS[size])
    return GaussianKernel(size, row / row.sum())


_PAD_MODES = {"zeros": "constant", "reflect": "reflect", "circular": "wrap", "edge": "edge"}


@lru_cache(maxsize=64)
def _axis_operator(n: int, row: tuple[float, ...], padding: str) -> np.ndarray:
    # (n, n) matrix applying pad + valid correlation along one axis
    if padding not in _PAD_MODES:
        raise ValueError(f"unknown padding mode {padding!r}; expected one of {sorted(_PAD_MODES)}")
    k = len(row)
    before = (k - 1) // 2
    eye = np.pad(np.eye(n), ((before, k - 1 - before), (0, 0)), mode=_PAD_MODES[padding])
    op = sum(t * eye[i : i + n] for i, t in enumerate(row))
    op.setflags(write=False)
    return op


def _as_kernel(kernel) -> GaussianKernel:
    if kernel is None:
        return gaussian_kernel()
    if isinstance(kernel, int):
        return gaussian_kernel(kernel)
    return kernel


def gaussian_blur(x, kernel: GaussianKernel | int | None = None, padding: str = "reflect") -> Tensor:
    """Depthwise smoothing with a fixed kernel; output has the input's shape.

    The kernel is separable and the padding is fixed, so each axis pass is a
    constant linear map.  Both are applied as small matrix products, which is
    the same map as a grouped conv2d with the 2-D outer-product kernel.
    """
    x = _t(x)
    kernel = _as_kernel(kernel)
    if x.ndim != 4:
        raise ShapeError(f"gaussian_blur: expected (N, C, H, W), got {x.shape}")
    h, w = x.shape[2:]
    if h < kernel.size or w < kernel.size:
        raise ShapeError(f"gaussian_blur: spatial size {(h, w)} smaller than kernel size {kernel.size}")
    row = tuple(float(v) for v in kernel.row)
    rows = _axis_operator(h, row, padding).astype(x.dtype)
    cols = _axis_operator(w, row, padding).T.astype(x.dtype)
    out = np.matmul(rows, x.data @ cols)

    def fn(g):
        return (np.matmul(rows.T, g) @ cols.T,)

    return from_op(out, (x,), fn)


def laplacian(x, kernel: GaussianKernel | int | None = None, padding: str = "reflect") -> Tensor:
    """High-pass residual ``x - gaussian_blur(x)``."""
    x = _t(x)
    return sub(x, gaussian_blur(x, kernel, padding))
