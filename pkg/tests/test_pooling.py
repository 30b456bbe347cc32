import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgepool.pooling import (
    PoolingLayer,
    PoolingLayerParams,
    PoolingVariant,
    PoolKind,
    blur_pool,
    lgca_branches,
    lgca_pool,
    normal_pool,
    pool_dispatch,
    wadca_branches,
    wadca_pool,
)
from edgepool.tensor import ShapeError, avgpool2d, maxpool2d

KINDS = ["normal", "blur", "lgca", "wadca"]


def _layer(kind, channels=4, **kw):
    return PoolingLayer.build(PoolingVariant(kind=kind, **kw), channels, reduction=2, rng=0)


def selection_params(channels: int, reduction: int = 2) -> PoolingLayerParams:
    """SE saturated open, reduction picking the low-frequency half."""
    p = PoolingLayerParams.init(channels, reduction, rng=0)
    p.se.w2.data[...] = 0.0
    p.se.b2.data[...] = 20.0
    p.reduce_w.data[...] = 0.0
    p.reduce_w.data[np.arange(channels), np.arange(channels), 0, 0] = 1.0
    return p


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("terminal", ["max", "avg"])
def test_shape_uniformity(kind, terminal):
    x = np.random.default_rng(0).standard_normal((1, 4, 8, 8))
    assert _layer(kind, terminal=terminal)(x).shape == (1, 4, 4, 4)
    x = np.random.default_rng(0).standard_normal((2, 8, 16, 16))
    assert _layer(kind, channels=8, terminal=terminal)(x).shape == (2, 8, 8, 8)


def test_normal_is_maxpool():
    x = np.random.default_rng(1).standard_normal((2, 3, 8, 8))
    np.testing.assert_array_equal(normal_pool(x).data, maxpool2d(x, 2, 2).data)
    np.testing.assert_array_equal(pool_dispatch(x, PoolingVariant()).data, maxpool2d(x, 2, 2).data)
    avg = PoolingVariant(terminal="avg")
    np.testing.assert_array_equal(normal_pool(x, avg).data, avgpool2d(x, 2, 2).data)


@pytest.mark.parametrize("kind", KINDS)
def test_dispatch_equals_direct_call(kind):
    x = np.random.default_rng(2).standard_normal((1, 4, 8, 8))
    layer = _layer(kind)
    direct = {"normal": lambda: normal_pool(x, layer.variant), "blur": lambda: blur_pool(x, layer.variant),
              "lgca": lambda: lgca_pool(x, layer.params, layer.variant),
              "wadca": lambda: wadca_pool(x, layer.params, layer.variant)}[kind]
    np.testing.assert_array_equal(layer(x).data, direct().data)


def test_dispatch_param_contract():
    with pytest.raises(ValueError, match="needs layer parameters"):
        pool_dispatch(np.zeros((1, 2, 8, 8)), PoolingVariant(kind="lgca"))
    with pytest.raises(ValueError, match="takes no parameters"):
        pool_dispatch(np.zeros((1, 2, 8, 8)), PoolingVariant(), PoolingLayerParams.init(2, rng=0))


def test_variant_validation():
    with pytest.raises(ValueError):
        PoolingVariant(kind="median")
    with pytest.raises(ValueError):
        PoolingVariant(terminal="min")
    with pytest.raises(ValueError):
        PoolingVariant(stride=0)
    with pytest.raises(ValueError):
        PoolingVariant(gaussian_size=4)
    assert PoolingVariant(kind="wadca").kind is PoolKind.WADCA


def test_blur_pool_constant_image():
    x = np.full((1, 2, 8, 8), 0.7)
    for terminal in ("max", "avg"):
        np.testing.assert_allclose(blur_pool(x, PoolingVariant("blur", terminal)).data, 0.7, atol=1e-14)


def test_blur_pool_damps_block_crossing_shift():
    # impulse moving across a 2x2 block boundary: max pooling jumps a whole output cell
    a, b = np.zeros((1, 1, 8, 8)), np.zeros((1, 1, 8, 8))
    a[0, 0, 3, 3] = 1.0
    b[0, 0, 3, 4] = 1.0
    d_max = np.linalg.norm(normal_pool(a).data - normal_pool(b).data)
    d_blur = np.linalg.norm(blur_pool(a).data - blur_pool(b).data)
    assert d_max == pytest.approx(np.sqrt(2))
    assert d_blur < d_max


def test_lgca_branches_sum_to_input():
    rng = np.random.default_rng(3)
    # dyadic values: every intermediate is exact, so the sum is bit-exact
    x = rng.integers(-64, 64, (2, 3, 8, 8)) / 8.0
    g, lap = lgca_branches(x, PoolingVariant("lgca"))
    np.testing.assert_array_equal(g.data + lap.data, x)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_lgca_branch_sum_within_one_rounding(seed):
    x = np.random.default_rng(seed).standard_normal((1, 2, 8, 8))
    g, lap = lgca_branches(x, PoolingVariant("lgca"))
    err = np.abs(g.data + lap.data - x)
    bound = np.spacing(np.maximum(np.abs(x), np.abs(g.data)))
    assert np.all(err <= bound)


def test_wadca_branches_sum_to_input():
    x = np.random.default_rng(4).standard_normal((2, 3, 8, 8))
    a, d = wadca_branches(x)
    assert np.max(np.abs(a.data + d.data - x)) < 1e-10


@pytest.mark.parametrize("size", [2, 3, 5])
def test_lgca_selection_reproduces_avg_blur_pool(size):
    x = np.random.default_rng(5).random((2, 4, 8, 8))
    variant = PoolingVariant("lgca", terminal="avg", gaussian_size=size)
    got = lgca_pool(x, selection_params(4), variant).data
    ref = blur_pool(x, PoolingVariant("blur", terminal="avg", gaussian_size=size)).data
    assert np.max(np.abs(got - ref)) < 1e-6


def test_params_init_schemes():
    p = PoolingLayerParams.init(3, reduction=2, rng=0)
    assert p.se.channels == 6
    assert p.reduce_w.shape == (3, 6, 1, 1)
    w = p.reduce_w.data[:, :, 0, 0]
    np.testing.assert_array_equal(w, np.hstack([np.eye(3), np.eye(3)]))
    np.testing.assert_array_equal(p.reduce_b.data, 0.0)
    r = PoolingLayerParams.init(3, reduction=2, rng=0, scheme="random").reduce_w.data
    assert np.all(np.abs(r) <= 1 / np.sqrt(6))
    with pytest.raises(ValueError):
        PoolingLayerParams.init(3, scheme="ones")


def test_selection_init_starts_near_half_input():
    # zero SE output layer -> weights 0.5; selection sums the branches -> x / 2 before pooling
    x = np.random.default_rng(6).random((1, 4, 8, 8))
    layer = _layer("wadca", terminal="avg")
    layer.params.se.w2.data[...] = 0.0
    np.testing.assert_allclose(layer(x).data, avgpool2d(x / 2, 2, 2).data, atol=1e-14)


def test_stage_named_diagnostics():
    params = PoolingLayerParams.init(4, rng=0)
    with pytest.raises(ShapeError, match="lgca/input"):
        lgca_pool(np.zeros((1, 3, 8, 8)), params, PoolingVariant("lgca"))
    with pytest.raises(ShapeError, match="wadca/input"):
        wadca_pool(np.zeros((1, 3, 8, 8)), params, PoolingVariant("wadca"))
    with pytest.raises(ShapeError, match="lgca/blur"):
        lgca_pool(np.zeros((1, 4, 4, 4)), params, PoolingVariant("lgca"))


def test_wadca_odd_size_is_padded():
    x = np.random.default_rng(7).standard_normal((1, 2, 7, 7))
    layer = _layer("wadca", channels=2)
    assert layer(x).shape == (1, 2, 3, 3)
