"""Single-level orthonormal 2-D Haar transform.

For each non-overlapping block ``[[a, b], [c, d]]``::

    ll = (a + b + c + d) / 2      lh = (a - b + c - d) / 2
    hl = (a + b - c - d) / 2      hh = (a - b - c + d) / 2

``lh`` carries detail along the width axis, ``hl`` along the height axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, _t, crop, from_op, pad2d

__all__ = ["WaveletCoeffs", "dwt2", "idwt2", "approx_recon", "detail_recon"]


@dataclass
class WaveletCoeffs:
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor
    # spatial size of the signal before odd-size padding, if any
    size: tuple[int, int] | None = None

    def __post_init__(self):
        shapes = {t.shape for t in self.bands}
        if len(shapes) != 1:
            raise ShapeError(f"WaveletCoeffs: subband shapes differ: {sorted(shapes)}")
        if self.ll.ndim != 4:
            raise ShapeError(f"WaveletCoeffs: subbands must be (N, C, H, W), got {self.ll.shape}")

    @property
    def bands(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return self.ll, self.lh, self.hl, self.hh

    @property
    def shape(self) -> tuple[int, ...]:
        return self.ll.shape


def _analysis(x: np.ndarray):
    a, b = x[:, :, 0::2, 0::2], x[:, :, 0::2, 1::2]
    c, d = x[:, :, 1::2, 0::2], x[:, :, 1::2, 1::2]
    s, t = a + c, b + d  # column sums
    u, v = a - c, b - d
    return (s + t) / 2, (s - t) / 2, (u + v) / 2, (u - v) / 2


def _synthesis(ll, lh, hl, hh) -> np.ndarray:
    n, c, h, w = ll.shape
    out = np.empty((n, c, 2 * h, 2 * w), dtype=np.result_type(ll, lh, hl, hh))
    p, q = ll + lh, ll - lh
    r, s = hl + hh, hl - hh
    out[:, :, 0::2, 0::2] = (p + r) / 2
    out[:, :, 0::2, 1::2] = (q + s) / 2
    out[:, :, 1::2, 0::2] = (p - r) / 2
    out[:, :, 1::2, 1::2] = (q - s) / 2
    return out


def dwt2(x, pad_odd: bool = False) -> WaveletCoeffs:
    """Split ``x`` into four half-resolution subbands.

    Odd spatial sizes are rejected unless ``pad_odd``; then the bottom row /
    right column is replicated and :func:`idwt2` crops it off again.
    """
    x = _t(x)
    if x.ndim != 4:
        raise ShapeError(f"dwt2: expected (N, C, H, W), got {x.shape}")
    h, w = x.shape[2:]
    size = None
    if h % 2 or w % 2:
        if not pad_odd:
            raise ShapeError(f"dwt2: spatial size {(h, w)} is odd; pass pad_odd=True to edge-pad")
        x = pad2d(x, (0, h % 2, 0, w % 2), mode="edge")
        size = (h, w)

    bands = _analysis(x.data)
    zero = np.zeros_like(bands[0])
    outs = []
    for k in range(4):
        def fn(g, k=k):
            parts = [zero] * 4
            parts[k] = g
            return (_synthesis(*parts),)

        outs.append(from_op(np.ascontiguousarray(bands[k]), (x,), fn))
    return WaveletCoeffs(*outs, size=size)


def idwt2(coeffs: WaveletCoeffs) -> Tensor:
    """Exact inverse of :func:`dwt2`."""
    bands = coeffs.bands
    out = from_op(_synthesis(*(b.data for b in bands)), bands, lambda g: _analysis(g))
    if coeffs.size is not None:
        out = crop(out, *coeffs.size)
    return out


def _block_mean(n: int, dtype) -> np.ndarray:
    # per-axis factor of the approximation projection: average within pairs
    return np.kron(np.eye(n // 2), np.full((2, 2), 0.5)).astype(dtype)


def _project(x, keep_approx: bool, pad_odd: bool, op: str) -> Tensor:
    # idwt2 of a subset of dwt2 bands, fused into one node.  Keeping only the
    # approximation band replaces every 2x2 block by its mean, a separable
    # symmetric projection; the detail part is its complement.  Both are their
    # own adjoints.
    x = _t(x)
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected (N, C, H, W), got {x.shape}")
    h, w = x.shape[2:]
    if (h % 2 or w % 2) and not pad_odd:
        raise ShapeError(f"{op}: spatial size {(h, w)} is odd; pass pad_odd=True to edge-pad")
    padded = pad2d(x, (0, h % 2, 0, w % 2), mode="edge") if h % 2 or w % 2 else x
    rows = _block_mean(padded.shape[2], x.dtype)
    cols = _block_mean(padded.shape[3], x.dtype)

    def apply(a: np.ndarray) -> np.ndarray:
        approx = np.matmul(rows, a @ cols)
        return approx if keep_approx else a - approx

    out = from_op(apply(padded.data), (padded,), lambda g: (apply(g),))
    return crop(out, h, w) if out.shape[2:] != (h, w) else out


def approx_recon(x, pad_odd: bool = False) -> Tensor:
    """Reconstruction from the approximation subband only."""
    return _project(x, True, pad_odd, "approx_recon")


def detail_recon(x, pad_odd: bool = False) -> Tensor:
    """Reconstruction from the three detail subbands only."""
    return _project(x, False, pad_odd, "detail_recon")
