"""Dense tensors with a define-by-run reverse-mode tape.

Spatial operations use the (batch, channels, height, width) layout.  A tensor
produced while a :class:`Tape` is active and depending on anything with
``requires_grad`` is recorded on that tape; ``backward(loss)`` then walks the
tape in reverse and writes ``.grad`` on every leaf that needs it.

Outside a tape every op is plain numpy, which is what evaluation uses.
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, log_softmax, softmax

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "ShapeError",
    "from_op",
    "backward",
    "conv2d",
    "conv_transpose2d",
    "relu",
    "sigmoid",
    "add",
    "sub",
    "mul",
    "scale",
    "mul_channelwise",
    "concat_channels",
    "slice_channels",
    "pad2d",
    "subsample",
    "crop",
    "maxpool2d",
    "avgpool2d",
    "global_avg_pool",
    "fully_connected",
    "softmax_cross_entropy",
    "mse_loss",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_node", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: tuple[Tape, int] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _raise_item(self)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__


def _raise_item(t: Tensor):
    raise ShapeError(f"item() needs a single-element tensor, got shape {t.shape}")


class Parameter(Tensor):
    """A learnable leaf tensor with a checkpoint name."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(np.array(data, dtype=dtype), requires_grad=True)
        self.name = name

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out, parents, backward):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Append-only record of differentiable operations.

    Use as a context manager; ops executed inside the ``with`` block are
    recorded.  A tape can be differentiated once.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def record(self, out: Tensor, parents: Sequence[Tensor], fn: Callable) -> None:
        out._node = (self, len(self.nodes))
        self.nodes.append(_Node(out, tuple(parents), fn))

    def backward(self, loss: Tensor) -> None:
        if self._consumed:
            raise RuntimeError("backward() already ran on this tape; record a new forward pass")
        if loss.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        if loss._node is None or loss._node[0] is not self:
            raise RuntimeError("loss was not recorded on this tape")
        self._consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes[: loss._node[1] + 1]):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
                if parent._node is None:
                    leaves[key] = parent
        for key, leaf in leaves.items():
            leaf.grad = grads[key]
        # outputs point back at the tape, so drop the graph now rather than
        # leaving activations for the cycle collector
        self.nodes.clear()


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``."""
    if loss._node is None:
        raise RuntimeError("loss is not attached to a tape (run the forward pass inside `with Tape():`)")
    loss._node[0].backward(loss)


def from_op(data: np.ndarray, parents: Sequence[Tensor], fn: Callable) -> Tensor:
    """Wrap ``data`` as the output of a differentiable op.

    ``fn`` maps the output gradient to a tuple with one gradient (or None)
    per parent.
    """
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._node = None
    tape = active_tape()
    out.requires_grad = tape is not None and any(p.requires_grad for p in parents)
    if out.requires_grad:
        tape.record(out, parents, fn)
    return out


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _need4(x: Tensor, op: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected a rank-4 (N, C, H, W) tensor, got shape {x.shape}")


# ----------------------------------------------------------------------------
# convolution kernels (numpy level)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (N, C, Hp, Wp) -> (N, C*kh*kw, Ho*Wo), rows ordered (c, i, j)
    n, c, hp, wp = xp.shape
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    if (kh, kw, stride) == (1, 1, 1):
        return xp.reshape(n, c, hp * wp)
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=xp.dtype)
    hspan, wspan = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i : i + hspan : stride, j : j + wspan : stride]
    return cols.reshape(n, c * kh * kw, ho * wo)


def _col2im(cols: np.ndarray, shape: tuple, kh: int, kw: int, stride: int) -> np.ndarray:
    # adjoint of _im2col: scatter-add columns back onto an image of `shape`
    n, c, hp, wp = shape
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    if (kh, kw, stride) == (1, 1, 1):
        return cols.reshape(shape)
    cols = cols.reshape(n, c, kh, kw, ho, wo)
    out = np.zeros(shape, dtype=cols.dtype)
    hspan, wspan = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + hspan : stride, j : j + wspan : stride] += cols[:, :, i, j]
    return out


def _corr(xp: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    cout, _, kh, kw = w.shape
    n, _, hp, wp = xp.shape
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    out = np.matmul(w.reshape(cout, -1), _im2col(xp, kh, kw, stride))
    return out.reshape(n, cout, ho, wo)


def _corr_adjoint(g: np.ndarray, w: np.ndarray, stride: int, shape: tuple) -> np.ndarray:
    # scatter g (N, Cout, Ho, Wo) back through w (Cout, Cin, kh, kw) onto `shape`
    cout, _, kh, kw = w.shape
    n = g.shape[0]
    cols = np.matmul(w.reshape(cout, -1).T, g.reshape(n, cout, -1))
    return _col2im(cols, shape, kh, kw, stride)


def _corr_weight_grad(xp: np.ndarray, g: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    n, cout = g.shape[:2]
    cols = _im2col(xp, kh, kw, stride)
    gw = np.matmul(g.reshape(n, cout, -1), cols.transpose(0, 2, 1)).sum(axis=0)
    return gw.reshape(cout, xp.shape[1], kh, kw)


# ----------------------------------------------------------------------------
# differentiable ops


def conv2d(x, weight, bias=None, stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """Cross-correlation of ``x`` (N, C, H, W) with ``weight`` (Cout, C/groups, kH, kW)."""
    x, weight = _t(x), _t(weight)
    _need4(x, "conv2d")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d: weight must be (Cout, Cin, kH, kW), got shape {weight.shape}")
    if stride < 1 or padding < 0 or groups < 1:
        raise ValueError(f"conv2d: bad stride={stride}, padding={padding} or groups={groups}")
    n, c, h, w = x.shape
    cout, cin, kh, kw = weight.shape
    if c != cin * groups:
        raise ShapeError(f"conv2d: channel axis (1) of input is {c}, weight expects {cin} x groups {groups}")
    if cout % groups:
        raise ShapeError(f"conv2d: output channel axis (0) of weight is {cout}, not divisible by groups {groups}")
    if bias is not None:
        bias = _t(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv2d: bias must have shape ({cout},), got {bias.shape}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp:
        raise ShapeError(f"conv2d: kernel height {kh} exceeds padded height axis (2) {hp}")
    if kw > wp:
        raise ShapeError(f"conv2d: kernel width {kw} exceeds padded width axis (3) {wp}")
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    if groups == 1:
        out = _corr(xp, weight.data, stride)
    else:
        xs, ws = np.split(xp, groups, axis=1), np.split(weight.data, groups, axis=0)
        out = np.concatenate([_corr(a, b, stride) for a, b in zip(xs, ws)], axis=1)
    if bias is not None:
        out += bias.data[None, :, None, None]
    assert out.shape == (n, cout, ho, wo)

    def fn(g):
        gx = gw = gb = None
        if x.requires_grad:
            if groups == 1:
                gxp = _corr_adjoint(g, weight.data, stride, xp.shape)
            else:
                gs, ws = np.split(g, groups, axis=1), np.split(weight.data, groups, axis=0)
                shp = (n, cin, hp, wp)
                gxp = np.concatenate([_corr_adjoint(a, b, stride, shp) for a, b in zip(gs, ws)], axis=1)
            gx = gxp[:, :, padding : padding + h, padding : padding + w] if padding else gxp
        if weight.requires_grad:
            if groups == 1:
                gw = _corr_weight_grad(xp, g, kh, kw, stride)
            else:
                gs, xs = np.split(g, groups, axis=1), np.split(xp, groups, axis=1)
                gw = np.concatenate([_corr_weight_grad(a, b, kh, kw, stride) for a, b in zip(xs, gs)], axis=0)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return from_op(out, parents, fn)


def conv_transpose2d(x, weight, bias=None, stride: int = 1) -> Tensor:
    """Transposed convolution; ``weight`` is (Cin, Cout, kH, kW).

    Output spatial size is ``(H - 1) * stride + kH``.  This is the adjoint of
    :func:`conv2d` with the same weight and stride.
    """
    x, weight = _t(x), _t(weight)
    _need4(x, "conv_transpose2d")
    if weight.ndim != 4:
        raise ShapeError(f"conv_transpose2d: weight must be (Cin, Cout, kH, kW), got {weight.shape}")
    if stride < 1:
        raise ValueError(f"conv_transpose2d: stride must be >= 1, got {stride}")
    n, c, h, w = x.shape
    cin, cout, kh, kw = weight.shape
    if c != cin:
        raise ShapeError(f"conv_transpose2d: channel axis (1) of input is {c}, weight expects {cin}")
    if bias is not None:
        bias = _t(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv_transpose2d: bias must have shape ({cout},), got {bias.shape}")
    if h == 0 or w == 0:
        raise ShapeError(f"conv_transpose2d: empty spatial input {x.shape}")
    oshape = (n, cout, (h - 1) * stride + kh, (w - 1) * stride + kw)
    out = _corr_adjoint(x.data, weight.data, stride, oshape)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def fn(g):
        gx = gw = gb = None
        if x.requires_grad:
            gx = _corr(g, weight.data, stride)
        if weight.requires_grad:
            gw = _corr_weight_grad(g, x.data, kh, kw, stride)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return from_op(out, parents, fn)


def relu(x) -> Tensor:
    x = _t(x)
    mask = x.data > 0
    return from_op(x.data * mask, (x,), lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = _t(x)
    s = expit(x.data)
    return from_op(s, (x,), lambda g: (g * s * (1.0 - s),))


def _same_shape(x: Tensor, y: Tensor, op: str) -> None:
    if x.shape != y.shape:
        raise ShapeError(f"{op}: shape mismatch {x.shape} vs {y.shape}")


def add(x, y) -> Tensor:
    x, y = _t(x), _t(y)
    _same_shape(x, y, "add")
    return from_op(x.data + y.data, (x, y), lambda g: (g, g))


def sub(x, y) -> Tensor:
    x, y = _t(x), _t(y)
    _same_shape(x, y, "sub")
    return from_op(x.data - y.data, (x, y), lambda g: (g, -g))


def mul(x, y) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    x, y = _t(x), _t(y)
    _same_shape(x, y, "mul")
    return from_op(x.data * y.data, (x, y), lambda g: (g * y.data, g * x.data))


def scale(x, factor: float) -> Tensor:
    x = _t(x)
    return from_op(x.data * factor, (x,), lambda g: (g * factor,))


def mul_channelwise(x, w) -> Tensor:
    """Scale every (H, W) plane of channel c by ``w[c]``.

    ``w`` is either a length-C vector shared across the batch or an (N, C)
    matrix of per-sample weights.
    """
    x, w = _t(x), _t(w)
    _need4(x, "mul_channelwise")
    n, c = x.shape[:2]
    if w.shape == (c,):
        wb = w.data[None, :, None, None]
        reduce_axes = (0, 2, 3)
    elif w.shape == (n, c):
        wb = w.data[:, :, None, None]
        reduce_axes = (2, 3)
    else:
        raise ShapeError(f"mul_channelwise: weights of shape {w.shape} do not match channel axis (1) of {x.shape}")

    def fn(g):
        gw = (g * x.data).sum(axis=reduce_axes) if w.requires_grad else None
        return g * wb, gw

    return from_op(x.data * wb, (x, w), fn)


def concat_channels(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _need4(a, "concat_channels")
    _need4(b, "concat_channels")
    for axis, name in ((0, "batch"), (2, "height"), (3, "width")):
        if a.shape[axis] != b.shape[axis]:
            raise ShapeError(
                f"concat_channels: {name} axis ({axis}) differs: {a.shape[axis]} vs {b.shape[axis]}"
            )
    ca = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return from_op(out, (a, b), lambda g: (g[:, :ca], g[:, ca:]))


def slice_channels(x, start: int, stop: int) -> Tensor:
    x = _t(x)
    _need4(x, "slice_channels")
    if not 0 <= start < stop <= x.shape[1]:
        raise ShapeError(f"slice_channels: [{start}:{stop}] out of range for {x.shape[1]} channels")

    def fn(g):
        gx = np.zeros_like(x.data)
        gx[:, start:stop] = g
        return (gx,)

    return from_op(x.data[:, start:stop].copy(), (x,), fn)


_PAD_MODES = {"zeros": "constant", "reflect": "reflect", "circular": "wrap", "edge": "edge"}


def _pad_index(n: int, before: int, after: int, mode: str) -> np.ndarray:
    if mode == "zeros":
        return np.concatenate([np.full(before, -1), np.arange(n), np.full(after, -1)])
    return np.pad(np.arange(n), (before, after), mode=_PAD_MODES[mode])


def pad2d(x, pad, mode: str = "zeros") -> Tensor:
    """Pad the two spatial axes.

    ``pad`` is an int or ``(top, bottom, left, right)``; ``mode`` is one of
    zeros, reflect (edge-mirrored, edge not repeated), circular, edge.
    """
    x = _t(x)
    _need4(x, "pad2d")
    if mode not in _PAD_MODES:
        raise ValueError(f"pad2d: unknown mode {mode!r}")
    top, bottom, left, right = (pad,) * 4 if isinstance(pad, int) else pad
    h, w = x.shape[2:]
    if mode == "reflect" and (max(top, bottom) >= h or max(left, right) >= w):
        raise ShapeError(f"pad2d: reflect padding {pad} too large for spatial size {(h, w)}")
    if mode != "zeros" and (h == 0 or w == 0):
        raise ShapeError("pad2d: cannot pad an empty spatial extent")
    out = np.pad(x.data, ((0, 0), (0, 0), (top, bottom), (left, right)), mode=_PAD_MODES[mode])
    rows = _pad_index(h, top, bottom, mode)
    cols = _pad_index(w, left, right, mode)
    border_rows = [r for r in range(len(rows)) if not top <= r < top + h and rows[r] >= 0]
    border_cols = [q for q in range(len(cols)) if not left <= q < left + w and cols[q] >= 0]

    def fn(g):
        gr = g[:, :, top : top + h, :].copy()
        for r in border_rows:
            gr[:, :, rows[r], :] += g[:, :, r, :]
        gx = gr[:, :, :, left : left + w].copy()
        for q in border_cols:
            gx[:, :, :, cols[q]] += gr[:, :, :, q]
        return (gx,)

    return from_op(out, (x,), fn)


def subsample(x, stride: int) -> Tensor:
    """Keep every ``stride``-th row and column, starting at 0."""
    x = _t(x)
    _need4(x, "subsample")

    def fn(g):
        gx = np.zeros_like(x.data)
        gx[:, :, ::stride, ::stride] = g
        return (gx,)

    return from_op(np.ascontiguousarray(x.data[:, :, ::stride, ::stride]), (x,), fn)


def crop(x, height: int, width: int) -> Tensor:
    """Keep the top-left ``height`` x ``width`` window."""
    x = _t(x)
    _need4(x, "crop")
    if height > x.shape[2] or width > x.shape[3]:
        raise ShapeError(f"crop: {(height, width)} larger than spatial size {x.shape[2:]}")

    def fn(g):
        gx = np.zeros_like(x.data)
        gx[:, :, :height, :width] = g
        return (gx,)

    return from_op(x.data[:, :, :height, :width].copy(), (x,), fn)


def _pool_check(x: Tensor, k: int, stride: int, op: str) -> tuple[int, int]:
    _need4(x, op)
    if k < 1 or stride < 1:
        raise ValueError(f"{op}: kernel and stride must be positive, got k={k}, stride={stride}")
    h, w = x.shape[2:]
    if k > h or k > w:
        raise ShapeError(f"{op}: window {k} larger than spatial size {(h, w)}")
    return (h - k) // stride + 1, (w - k) // stride + 1


def _window_slices(h: int, w: int, ho: int, wo: int, k: int, stride: int):
    hs, ws = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            yield (slice(None), slice(None), slice(i, i + hs, stride), slice(j, j + ws, stride))


def maxpool2d(x, k: int, stride: int | None = None) -> Tensor:
    """Max pooling; gradient goes to the first (row-major) maximum in a window."""
    x = _t(x)
    stride = k if stride is None else stride
    ho, wo = _pool_check(x, k, stride, "maxpool2d")
    slices = list(_window_slices(*x.shape[2:], ho, wo, k, stride))
    out = x.data[slices[0]].copy()
    for sl in slices[1:]:
        np.maximum(out, x.data[sl], out=out)

    def fn(g):
        gx = np.zeros_like(x.data)
        unclaimed = np.ones(out.shape, dtype=bool)
        for sl in slices:
            hit = x.data[sl] == out
            hit &= unclaimed
            unclaimed &= ~hit
            gx[sl] += np.where(hit, g, 0)
        return (gx,)

    return from_op(out, (x,), fn)


def avgpool2d(x, k: int, stride: int | None = None) -> Tensor:
    x = _t(x)
    stride = k if stride is None else stride
    ho, wo = _pool_check(x, k, stride, "avgpool2d")
    slices = list(_window_slices(*x.shape[2:], ho, wo, k, stride))
    out = x.data[slices[0]].copy()
    for sl in slices[1:]:
        out += x.data[sl]
    out /= k * k

    def fn(g):
        gx = np.zeros_like(x.data)
        share = g / (k * k)
        for sl in slices:
            gx[sl] += share
        return (gx,)

    return from_op(out, (x,), fn)


def global_avg_pool(x) -> Tensor:
    """Spatial mean per channel: (N, C, H, W) -> (N, C)."""
    x = _t(x)
    _need4(x, "global_avg_pool")
    h, w = x.shape[2:]
    out = x.data.mean(axis=(2, 3))
    return from_op(out, (x,), lambda g: (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),))


def fully_connected(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` for x (N, Din), weight (Dout, Din)."""
    x, weight = _t(x), _t(weight)
    if x.ndim != 2 or weight.ndim != 2:
        raise ShapeError(f"fully_connected: need x (N, Din) and weight (Dout, Din), got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"fully_connected: input axis (1) is {x.shape[1]}, weight expects {weight.shape[1]}")
    out = x.data @ weight.data.T
    if bias is not None:
        bias = _t(bias)
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"fully_connected: bias must have shape ({weight.shape[0]},), got {bias.shape}")
        out = out + bias.data

    def fn(g):
        gx = g @ weight.data if x.requires_grad else None
        gw = g.T @ x.data if weight.requires_grad else None
        gb = g.sum(axis=0) if bias is not None and bias.requires_grad else None
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return from_op(out, parents, fn)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label]."""
    logits = _t(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: labels must have shape ({n},), got {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"softmax_cross_entropy: labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")
    logp = log_softmax(logits.data, axis=1)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()

    def fn(g):
        d = softmax(logits.data, axis=1)
        d[rows, labels] -= 1.0
        return (d * (g / n),)

    return from_op(np.asarray(loss, dtype=logits.dtype), (logits,), fn)


def mse_loss(pred, target) -> Tensor:
    """Mean squared error multiplied by the batch size (axis 0 of ``pred``)."""
    pred, target = _t(pred), _t(target)
    _same_shape(pred, target, "mse_loss")
    n = pred.shape[0]
    diff = pred.data - target.data
    factor = n / diff.size
    loss = np.asarray(factor * np.sum(diff * diff), dtype=pred.dtype)

    def fn(g):
        gp = (2.0 * factor * g) * diff
        return gp, -gp

    return from_op(loss, (pred, target), fn)
