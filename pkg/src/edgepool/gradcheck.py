"""Finite-difference gradient checks and a registry of them.

Each registered check builds a few random double-precision problems, runs the
tape gradient and a central-difference estimate, and reports the worst
relative error across all inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .attention import SEParams, se_forward
from .filters import gaussian_blur, gaussian_kernel, laplacian
from .haar import WaveletCoeffs, approx_recon, detail_recon, dwt2, idwt2
from .pooling import PoolKind, PoolingLayerParams, PoolingVariant, blur_pool, lgca_pool, normal_pool, wadca_pool
from .tensor import Tape, Tensor, from_op

DEFAULT_TOL = 1e-4
DEFAULT_STEP = 1e-5


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * max|n|).

    The floor keeps entries whose true gradient is ~0 from dividing
    round-off by round-off.
    """
    a, n = np.asarray(analytic, dtype=np.float64), np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise T.ShapeError(f"gradient shape {a.shape} differs from input shape {n.shape}")
    if a.size == 0:
        return 0.0
    floor = max(1e-3 * float(np.max(np.abs(n))), 1e-12)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def _project(out: Tensor, r: np.ndarray) -> Tensor:
    return from_op(np.asarray(np.sum(out.data * r)), (out,), lambda g: (g * r,))


def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[Tensor], step: float = DEFAULT_STEP,
              seed: int = 0) -> list[float]:
    """Compare tape gradients of ``fn`` against central differences.

    The output is reduced to a scalar by a fixed random projection. Returns
    one relative error per input with ``requires_grad``.
    """
    rng = np.random.default_rng(seed)
    with Tape():
        out = fn(*inputs)
        r = rng.standard_normal(out.shape)
        loss = _project(out, r)
        T.backward(loss)

    def value() -> float:
        return float(np.sum(fn(*inputs).data * r))

    errors = []
    for x in inputs:
        if not x.requires_grad:
            continue
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        numeric = np.zeros_like(x.data)
        flat, nflat = x.data.reshape(-1), numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = value()
            flat[i] = orig - step
            lo = value()
            flat[i] = orig
            nflat[i] = (hi - lo) / (2 * step)
        errors.append(relative_error(analytic, numeric))
    return errors


@dataclass(frozen=True)
class GradCheck:
    name: str
    scope: str  # "ops" or "layers"
    run: Callable[[np.random.Generator], tuple[float, int]]


@dataclass(frozen=True)
class GradCheckResult:
    name: str
    scope: str
    max_rel_error: float
    passed: bool
    shapes: int  # distinct input shapes exercised


REGISTRY: dict[str, GradCheck] = {}


def register(name: str, scope: str = "ops"):
    def deco(fn):
        REGISTRY[name] = GradCheck(name, scope, fn)
        return fn

    return deco


def run_gradchecks(scope: str = "all", seed: int = 0, tol: float = DEFAULT_TOL,
                   names: Sequence[str] | None = None) -> list[GradCheckResult]:
    if scope not in ("ops", "layers", "all"):
        raise ValueError(f"unknown gradcheck scope {scope!r}")
    results = []
    for k, check in enumerate(REGISTRY.values()):
        if scope != "all" and check.scope != scope:
            continue
        if names is not None and check.name not in names:
            continue
        err, shapes = check.run(np.random.default_rng([seed, k]))
        results.append(GradCheckResult(check.name, check.scope, err, bool(err < tol), shapes))
    return results


# ----------------------------------------------------------------------------
# registered checks; every check covers at least three random shapes


def _p(rng, *shape, low=None):
    data = rng.standard_normal(shape)
    if low is not None:
        # keep probe points clear of relu kinks
        data = np.sign(data) * (np.abs(data) + low)
    return Tensor(data, requires_grad=True)


def _distinct(rng, *shape):
    # well-separated values: no maxpool ties within a finite-difference step
    n = int(np.prod(shape))
    return Tensor((rng.permutation(n) * 0.01 + rng.uniform(0, 1e-3, n)).reshape(shape), requires_grad=True)


def _worst(rng, cases) -> tuple[float, int]:
    # (worst error over all cases and inputs, number of distinct primary-input shapes)
    worst = 0.0
    for fn, inputs in cases:
        worst = max(worst, *gradcheck(fn, inputs, seed=int(rng.integers(1 << 31))))
    return worst, len({inputs[0].shape for _, inputs in cases})


@register("conv2d")
def _conv2d(rng):
    cases = []
    for (n, c, h, w), (cout, k), stride, pad in [
        ((2, 3, 5, 5), (4, 3), 1, 0),
        ((1, 2, 6, 7), (3, 3), 2, 1),
        ((2, 4, 4, 4), (2, 1), 1, 0),
    ]:
        x, wt, b = _p(rng, n, c, h, w), _p(rng, cout, c, k, k), _p(rng, cout)
        cases.append((lambda x, wt, b, s=stride, p=pad: T.conv2d(x, wt, b, s, p), [x, wt, b]))
    x, wt = _p(rng, 1, 4, 5, 5), _p(rng, 4, 2, 3, 3)
    cases.append((lambda x, wt: T.conv2d(x, wt, None, 1, 1, groups=2), [x, wt]))
    return _worst(rng, cases)


@register("conv_transpose2d")
def _conv_t(rng):
    cases = []
    for (n, c, h, w), (cout, k), stride in [((2, 3, 3, 3), (2, 2), 2), ((1, 2, 4, 3), (3, 3), 1), ((2, 4, 2, 2), (2, 3), 2)]:
        x, wt, b = _p(rng, n, c, h, w), _p(rng, c, cout, k, k), _p(rng, cout)
        cases.append((lambda x, wt, b, s=stride: T.conv_transpose2d(x, wt, b, s), [x, wt, b]))
    return _worst(rng, cases)


@register("relu")
def _relu(rng):
    return _worst(rng, [(T.relu, [_p(rng, *s, low=1e-3)]) for s in [(2, 3, 4, 4), (1, 1, 5, 3), (2, 4, 8, 8)]])


@register("sigmoid")
def _sigmoid(rng):
    return _worst(rng, [(T.sigmoid, [_p(rng, *s)]) for s in [(2, 3, 4, 4), (3, 5), (1, 2, 3, 3)]])


@register("add_sub_mul")
def _arith(rng):
    cases = []
    for s in [(2, 3, 4, 4), (1, 2, 5, 5), (3, 4)]:
        cases.append((T.add, [_p(rng, *s), _p(rng, *s)]))
        cases.append((T.sub, [_p(rng, *s), _p(rng, *s)]))
        cases.append((T.mul, [_p(rng, *s), _p(rng, *s)]))
    return _worst(rng, cases)


@register("mul_channelwise")
def _mulc(rng):
    cases = [
        (T.mul_channelwise, [_p(rng, 2, 3, 4, 4), _p(rng, 3)]),
        (T.mul_channelwise, [_p(rng, 2, 4, 3, 5), _p(rng, 2, 4)]),
        (T.mul_channelwise, [_p(rng, 1, 5, 3, 2), _p(rng, 1, 5)]),
    ]
    return _worst(rng, cases)


@register("concat_channels")
def _concat(rng):
    cases = [(T.concat_channels, [_p(rng, n, a, h, w), _p(rng, n, b, h, w)])
             for n, a, b, h, w in [(2, 3, 3, 4, 4), (1, 1, 4, 5, 3), (2, 4, 2, 8, 8)]]
    return _worst(rng, cases)


@register("maxpool2d")
def _maxpool(rng):
    cases = [(lambda x, k=k, s=s: T.maxpool2d(x, k, s), [_distinct(rng, *shape)])
             for shape, k, s in [((2, 3, 4, 4), 2, 2), ((1, 2, 5, 5), 2, 1), ((2, 4, 8, 8), 3, 2)]]
    return _worst(rng, cases)


@register("avgpool2d")
def _avgpool(rng):
    cases = [(lambda x, k=k, s=s: T.avgpool2d(x, k, s), [_p(rng, *shape)])
             for shape, k, s in [((2, 3, 4, 4), 2, 2), ((1, 2, 5, 5), 2, 1), ((2, 4, 8, 8), 3, 2)]]
    return _worst(rng, cases)


@register("global_avg_pool")
def _gap(rng):
    return _worst(rng, [(T.global_avg_pool, [_p(rng, *s)]) for s in [(2, 3, 4, 4), (1, 1, 5, 3), (2, 4, 8, 8)]])


@register("fully_connected")
def _fc(rng):
    cases = [(T.fully_connected, [_p(rng, n, i), _p(rng, o, i), _p(rng, o)]) for n, i, o in [(2, 3, 4), (5, 1, 2), (1, 8, 8)]]
    return _worst(rng, cases)


@register("softmax_cross_entropy")
def _ce(rng):
    cases = []
    for n, k in [(2, 3), (4, 2), (1, 5)]:
        labels = rng.integers(0, k, n)
        cases.append((lambda z, y=labels: T.softmax_cross_entropy(z, y), [_p(rng, n, k)]))
    return _worst(rng, cases)


@register("mse_loss")
def _mse(rng):
    return _worst(rng, [(T.mse_loss, [_p(rng, *s), _p(rng, *s)]) for s in [(2, 3, 4, 4), (1, 2, 3, 3), (3, 1, 2, 2)]])


@register("pad2d")
def _pad(rng):
    cases = [(lambda x, m=m, p=p: T.pad2d(x, p, m), [_p(rng, *s)])
             for s, p, m in [((2, 3, 5, 5), 2, "reflect"), ((1, 2, 4, 6), (0, 1, 2, 1), "edge"),
                             ((1, 2, 4, 4), 1, "circular"), ((2, 1, 3, 3), 1, "zeros")]]
    return _worst(rng, cases)


@register("subsample_crop")
def _subsample(rng):
    cases = [(lambda x: T.subsample(x, 2), [_p(rng, 2, 3, 5, 5)]),
             (lambda x: T.subsample(x, 3), [_p(rng, 1, 2, 6, 7)]),
             (lambda x: T.crop(x, 3, 2), [_p(rng, 2, 2, 4, 4)])]
    return _worst(rng, cases)


@register("gaussian_blur")
def _blur(rng):
    cases = [(lambda x, k=k: gaussian_blur(x, gaussian_kernel(k)), [_p(rng, *s)])
             for s, k in [((2, 3, 8, 8), 5), ((1, 2, 5, 6), 3), ((2, 4, 4, 4), 2)]]
    cases.append((lambda x: laplacian(x, 5), [_p(rng, 1, 3, 6, 6)]))
    return _worst(rng, cases)


@register("haar")
def _haar(rng):
    def dwt_all(x):
        c = dwt2(x)
        return T.concat_channels(T.concat_channels(c.ll, c.lh), T.concat_channels(c.hl, c.hh))

    cases = []
    for s in [(2, 3, 4, 4), (1, 2, 8, 6), (2, 1, 2, 2)]:
        cases.append((dwt_all, [_p(rng, *s)]))
        cases.append((approx_recon, [_p(rng, *s)]))
        cases.append((detail_recon, [_p(rng, *s)]))
        half = (s[0], s[1], s[2] // 2, s[3] // 2)
        cases.append((lambda a, b, c, d: idwt2(WaveletCoeffs(a, b, c, d)), [_p(rng, *half) for _ in range(4)]))
    cases.append((lambda x: detail_recon(x, pad_odd=True), [_p(rng, 1, 2, 5, 7)]))
    return _worst(rng, cases)


def _se_case(rng, n, c, h, w, r):
    p = SEParams.init(c, r, rng)
    for q in p.parameters():
        q.data = rng.standard_normal(q.shape)
    x = _p(rng, n, c, h, w)
    return (lambda x, *ps: se_forward(x, SEParams(*ps)), [x, *p.parameters()])


@register("se_attention", "layers")
def _se(rng):
    return _worst(rng, [_se_case(rng, *a) for a in [(2, 4, 4, 4, 2), (1, 6, 3, 3, 1), (2, 8, 5, 4, 16)]])


def _layer_case(rng, pool_fn, n, c, h, w, variant):
    p = PoolingLayerParams.init(c, 2, rng, scheme="random")
    for q in p.se.parameters():
        q.data = rng.standard_normal(q.shape)
    x = _p(rng, n, c, h, w)

    def fn(x, w1, b1, w2, b2, rw, rb):
        return pool_fn(x, PoolingLayerParams(SEParams(w1, b1, w2, b2), rw, rb), variant)

    return fn, [x, *p.parameters()]


_LAYER_SHAPES = [((2, 2, 6, 6), "max", 3), ((1, 3, 8, 8), "avg", 5), ((2, 4, 4, 4), "max", 2)]


@register("lgca_pool", "layers")
def _lgca(rng):
    cases = [_layer_case(rng, lgca_pool, *s, PoolingVariant(PoolKind.LGCA, t, 2, k)) for s, t, k in _LAYER_SHAPES]
    return _worst(rng, cases)


@register("wadca_pool", "layers")
def _wadca(rng):
    cases = [_layer_case(rng, wadca_pool, *s, PoolingVariant(PoolKind.WADCA, t, 2, k)) for s, t, k in _LAYER_SHAPES]
    return _worst(rng, cases)


@register("blur_normal_pool", "layers")
def _blur_normal(rng):
    cases = []
    for shape, t, k in _LAYER_SHAPES:
        cases.append((lambda x, v=PoolingVariant(PoolKind.BLUR, t, 2, k): blur_pool(x, v), [_distinct(rng, *shape)]))
        cases.append((lambda x, v=PoolingVariant(PoolKind.NORMAL, t, 2): normal_pool(x, v), [_distinct(rng, *shape)]))
    return _worst(rng, cases)
