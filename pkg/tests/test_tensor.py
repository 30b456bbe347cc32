import gc
import math
import re
import weakref

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgepool import tensor as T
from edgepool.tensor import Parameter, ShapeError, Tape, Tensor, backward


def _rand(rng, *shape):
    return rng.standard_normal(shape)


# --- convolution -----------------------------------------------------------


def test_conv2d_identity_kernel():
    x = np.random.default_rng(0).standard_normal((2, 3, 5, 4))
    w = np.eye(3)[:, :, None, None]
    np.testing.assert_array_equal(T.conv2d(x, w).data, x)


def test_conv2d_window_sum():
    out = T.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)))
    assert out.shape == (1, 1, 1, 1)
    assert out.data.item() == 9.0


def test_conv2d_matches_direct_loop():
    rng = np.random.default_rng(1)
    x, w, b = _rand(rng, 2, 3, 6, 7), _rand(rng, 4, 3, 3, 2), _rand(rng, 4)
    out = T.conv2d(x, w, b, stride=2, padding=1).data
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ho, wo = (8 - 3) // 2 + 1, (9 - 2) // 2 + 1
    ref = np.zeros((2, 4, ho, wo))
    for n in range(2):
        for o in range(4):
            for i in range(ho):
                for j in range(wo):
                    ref[n, o, i, j] = np.sum(xp[n, :, 2 * i : 2 * i + 3, 2 * j : 2 * j + 2] * w[o]) + b[o]
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_conv2d_grouped_ones_is_identity():
    x = np.random.default_rng(2).standard_normal((2, 5, 4, 4))
    np.testing.assert_array_equal(T.conv2d(x, np.ones((5, 1, 1, 1)), groups=5).data, x)


@pytest.mark.parametrize(
    "xshape,wshape,kwargs,axis",
    [
        ((1, 3, 5, 5), (2, 4, 3, 3), {}, "channel axis (1)"),
        ((1, 4, 5, 5), (3, 2, 3, 3), {"groups": 2}, "output channel axis (0)"),
        ((1, 1, 2, 5), (1, 1, 3, 3), {}, "height axis (2)"),
        ((1, 1, 5, 2), (1, 1, 3, 3), {}, "width axis (3)"),
    ],
)
def test_conv2d_shape_errors_name_axis(xshape, wshape, kwargs, axis):
    with pytest.raises(ShapeError, match=re.escape(axis)):
        T.conv2d(np.zeros(xshape), np.zeros(wshape), **kwargs)


def test_conv_transpose_identity_and_size():
    x = np.random.default_rng(3).standard_normal((2, 3, 4, 5))
    np.testing.assert_array_equal(T.conv_transpose2d(x, np.eye(3)[:, :, None, None]).data, x)
    out = T.conv_transpose2d(x, np.ones((3, 2, 3, 3)), stride=2)
    assert out.shape == (2, 2, (4 - 1) * 2 + 3, (5 - 1) * 2 + 3)


@pytest.mark.parametrize("stride,k", [(1, 3), (2, 2), (2, 3), (3, 1)])
def test_conv_transpose_is_adjoint_of_conv(stride, k):
    rng = np.random.default_rng(stride * 10 + k)
    w = _rand(rng, 4, 3, k, k)  # conv: 3 -> 4 channels
    x = _rand(rng, 2, 3, 9, 8)
    y = T.conv2d(x, w, stride=stride).data
    r = _rand(rng, *y.shape)
    lhs = np.sum(y * r)
    back = T.conv_transpose2d(r, w, stride=stride).data
    # transpose output may be shorter than x when the stride does not tile it
    rhs = np.sum(x[:, :, : back.shape[2], : back.shape[3]] * back)
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


# --- elementwise -----------------------------------------------------------


def test_elementwise_values():
    np.testing.assert_array_equal(T.relu(np.array([-1.0, 2.0])).data, [0.0, 2.0])
    assert T.sigmoid(np.array(0.0)).data == 0.5
    x = np.random.default_rng(0).standard_normal((2, 3, 2, 2))
    np.testing.assert_array_equal(T.mul_channelwise(x, np.ones(3)).data, x)


def test_mul_channelwise_scales_planes():
    x = np.ones((1, 3, 2, 2))
    out = T.mul_channelwise(x, np.array([1.0, 2.0, 3.0])).data
    assert [out[0, c].tolist() for c in range(3)] == [[[1, 1], [1, 1]], [[2, 2], [2, 2]], [[3, 3], [3, 3]]]


def test_shape_mismatch_rejected():
    with pytest.raises(ShapeError):
        T.add(np.zeros((1, 2, 3, 3)), np.zeros((1, 2, 3, 4)))
    with pytest.raises(ShapeError):
        T.mul_channelwise(np.zeros((1, 2, 3, 3)), np.zeros(3))
    with pytest.raises(ShapeError):
        T.concat_channels(np.zeros((1, 2, 3, 3)), np.zeros((2, 2, 3, 3)))


def test_concat_then_slice_recovers_operands():
    rng = np.random.default_rng(4)
    a, b = _rand(rng, 2, 3, 4, 4), _rand(rng, 2, 5, 4, 4)
    c = T.concat_channels(a, b)
    assert c.shape == (2, 8, 4, 4)
    np.testing.assert_array_equal(T.slice_channels(c, 0, 3).data, a)
    np.testing.assert_array_equal(T.slice_channels(c, 3, 8).data, b)
    z = T.concat_channels(a, np.zeros_like(a))
    np.testing.assert_array_equal(T.slice_channels(z, 0, 3).data, a)


# --- pooling ---------------------------------------------------------------


def test_pool_values():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    assert T.maxpool2d(x, 2, 2).data.item() == 4.0
    assert T.avgpool2d(x, 2, 2).data.item() == 2.5
    assert T.global_avg_pool(np.ones((2, 3, 4, 4))).shape == (2, 3)


def test_pool_window_too_large():
    with pytest.raises(ShapeError):
        T.maxpool2d(np.zeros((1, 1, 2, 2)), 3)
    with pytest.raises(ShapeError):
        T.avgpool2d(np.zeros((1, 1, 2, 5)), 3)


def test_maxpool_gradient_goes_to_first_tie():
    x = Tensor(np.array([[[[5.0, 5.0], [5.0, 1.0]]]]), requires_grad=True)
    with Tape():
        pooled = T.global_avg_pool(T.maxpool2d(x, 2, 2))
        backward(T.softmax_cross_entropy(T.fully_connected(pooled, np.array([[1.0], [0.0]])), [0]))
    # only the first maximal element receives gradient
    assert x.grad[0, 0, 0, 0] != 0.0
    assert np.count_nonzero(x.grad) == 1


@given(st.integers(1, 3), st.integers(1, 3), st.integers(2, 9), st.integers(2, 9), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_pool_output_shape(n, c, h, w, k, s):
    k = min(k, h, w)
    x = np.random.default_rng(0).standard_normal((n, c, h, w))
    for op in (T.maxpool2d, T.avgpool2d):
        out = op(x, k, s)
        assert out.shape == (n, c, (h - k) // s + 1, (w - k) // s + 1)


# --- dense + losses --------------------------------------------------------


def test_fully_connected_cases():
    x = np.random.default_rng(5).standard_normal((3, 4))
    np.testing.assert_array_equal(T.fully_connected(x, np.eye(4), np.zeros(4)).data, x)
    b = np.array([1.0, -2.0])
    np.testing.assert_array_equal(T.fully_connected(x, np.zeros((2, 4)), b).data, np.tile(b, (3, 1)))
    with pytest.raises(ShapeError):
        T.fully_connected(x, np.zeros((2, 5)))


def test_losses():
    assert math.isclose(T.softmax_cross_entropy(np.zeros((4, 2)), [0, 1, 1, 0]).data.item(), math.log(2), rel_tol=1e-12)
    x = np.random.default_rng(6).standard_normal((3, 2, 4, 4))
    assert T.mse_loss(x, x).data.item() == 0.0
    # mean squared error times batch size
    assert math.isclose(T.mse_loss(np.ones((4, 1, 2, 2)), np.zeros((4, 1, 2, 2))).data.item(), 4.0)
    with pytest.raises(ValueError):
        T.softmax_cross_entropy(np.zeros((2, 3)), [0, 3])


# --- tape ------------------------------------------------------------------


def test_square_derivative():
    x = Tensor(np.array([3.0]), requires_grad=True)
    with Tape():
        backward(T.mul(x, x))
    assert x.grad.tolist() == [6.0]


def test_relu_chain_at_negative_input():
    x = Tensor(np.array([-2.0]), requires_grad=True)
    with Tape():
        backward(T.scale(T.relu(x), 3.0))
    assert x.grad.tolist() == [0.0]


def test_backward_twice_rejected():
    x = Tensor(np.array([1.0]), requires_grad=True)
    with Tape():
        y = T.mul(x, x)
        backward(y)
        with pytest.raises(RuntimeError):
            backward(y)


def test_backward_releases_graph():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    gc.disable()
    try:
        with Tape() as tape:
            hidden = T.relu(T.scale(x, 2.0))
            ref = weakref.ref(hidden)
            backward(T.mse_loss(hidden, np.zeros((2, 2))))
        del hidden
        # freed by refcount alone, without the cycle collector
        assert ref() is None
        assert tape.nodes == []
    finally:
        gc.enable()
    assert x.grad.shape == (2, 2)


def test_nonscalar_loss_rejected():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape():
        with pytest.raises(ShapeError):
            backward(T.relu(x))


def test_no_recording_outside_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    y = T.relu(x)
    assert not y.requires_grad
    with pytest.raises(RuntimeError):
        backward(y)


def test_parameter_gradient_shapes_match():
    rng = np.random.default_rng(7)
    w = Parameter(rng.standard_normal((4, 3, 3, 3)), "w")
    b = Parameter(np.zeros(4), "b")
    head = Parameter(rng.standard_normal((2, 4)), "head")
    with Tape():
        h = T.global_avg_pool(T.relu(T.conv2d(rng.standard_normal((2, 3, 6, 6)), w, b, padding=1)))
        backward(T.softmax_cross_entropy(T.fully_connected(h, head), [0, 1]))
    for p in (w, b, head):
        assert p.grad.shape == p.shape


def test_finite_outputs_on_finite_inputs():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 3, 8, 8)) * 50
    out = T.sigmoid(T.conv2d(x, rng.standard_normal((3, 3, 3, 3)), padding=1))
    assert np.all(np.isfinite(out.data))
