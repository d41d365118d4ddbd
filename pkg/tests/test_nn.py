import math

import numpy as np
import pytest

from goaljump import exceptions
from goaljump.nn import (PARAM_DTYPE, Adam, Conv1d, Dense, Flatten, GaussianHead, ReLU, Sequential, Tanh,
                         clip_grad_norm, global_norm, gradient_check, mlp, orthogonal)


def naive_conv(conv: Conv1d, x: np.ndarray) -> np.ndarray:
    weight = conv.params["weight"].astype(np.float64)
    x = np.pad(x, ((0, 0), (conv.padding, conv.padding), (0, 0)))
    length = (x.shape[1] - conv.kernel) // conv.stride + 1
    out = np.zeros((x.shape[0], length, conv.filters))
    for b in range(x.shape[0]):
        for t in range(length):
            window = x[b, t * conv.stride:t * conv.stride + conv.kernel]
            for f in range(conv.filters):
                out[b, t, f] = np.sum(window * weight[f]) + conv.params["bias"][f]
    return out


def test_orthogonal_columns():
    w = orthogonal(np.random.default_rng(0), (16, 8), 2.0).astype(np.float64)
    assert w.dtype == np.float64
    np.testing.assert_allclose(w.T @ w, 4.0 * np.eye(8), atol=1e-5)
    wide = orthogonal(np.random.default_rng(0), (4, 10), 1.0).astype(np.float64)
    np.testing.assert_allclose(wide @ wide.T, np.eye(4), atol=1e-5)


def test_parameters_are_float32():
    layer = Dense(3, 2, np.random.default_rng(0))
    assert layer.params["weight"].dtype == PARAM_DTYPE
    assert layer.forward(np.ones((1, 3))).dtype == np.float64


@pytest.mark.parametrize("stride, padding", [(1, 0), (3, 0), (2, 1), (4, 4)])
def test_conv_matches_a_naive_loop(stride, padding):
    rng = np.random.default_rng(stride + 10 * padding)
    conv = Conv1d(5, 3, 4, stride, rng, padding=padding)
    conv.params["bias"] = rng.standard_normal(3).astype(PARAM_DTYPE)
    x = rng.standard_normal((2, 13, 5))
    np.testing.assert_allclose(conv.forward(x), naive_conv(conv, x), atol=1e-12)


def test_conv_shapes_of_both_encoder_geometries():
    rng = np.random.default_rng(0)
    assert Conv1d(15, 32, 6, 3, rng).output_length(66) == 21
    assert Conv1d(32, 16, 4, 2, rng).output_length(21) == 9
    assert Conv1d(15, 32, 8, 4, rng, padding=4).output_length(66) == 17
    assert Conv1d(32, 32, 5, 1, rng, padding=2).output_length(17) == 17


def test_conv_rejects_short_sequences():
    conv = Conv1d(2, 2, 5, 1, np.random.default_rng(0))
    with pytest.raises(exceptions.DimensionError):
        conv.output_length(4)
    with pytest.raises(exceptions.DimensionError):
        conv.forward(np.zeros((1, 4, 2)))
    with pytest.raises(exceptions.DimensionError):
        conv.forward(np.zeros((1, 8, 3)))


@pytest.mark.parametrize("stride, padding", [(1, 0), (3, 0), (2, 2)])
def test_conv_input_gradient(stride, padding):
    rng = np.random.default_rng(1)
    conv = Conv1d(3, 4, 5, stride, rng, padding=padding)
    x = rng.standard_normal((2, 12, 3))
    w = rng.standard_normal(conv.forward(x).shape)
    dx = conv.backward(w)
    h = 1e-5
    numeric = np.zeros_like(x)
    for index in np.ndindex(*x.shape):
        step = np.zeros_like(x)
        step[index] = h
        numeric[index] = (np.sum(w * conv.forward(x + step)) - np.sum(w * conv.forward(x - step))) / (2 * h)
    conv.clear_cache()
    np.testing.assert_allclose(dx, numeric, atol=1e-8)


def test_dense_gradient():
    rng = np.random.default_rng(0)
    assert gradient_check(Dense(6, 3, rng), rng.standard_normal((5, 6))) < 1e-6


def test_conv_parameter_gradient():
    rng = np.random.default_rng(0)
    conv = Conv1d(4, 3, 3, 2, rng, padding=1)
    assert gradient_check(conv, rng.standard_normal((2, 9, 4)), entries=16) < 1e-6


def test_tanh_mlp_gradient():
    rng = np.random.default_rng(0)
    net = mlp(7, [12, 12], 3, rng)
    assert gradient_check(net, rng.standard_normal((4, 7)), h=1e-4) < 1e-3


def test_relu_conv_stack_gradient():
    rng = np.random.default_rng(2)
    net = Sequential([Conv1d(3, 4, 3, 2, rng), ReLU(), Conv1d(4, 2, 2, 1, rng), ReLU(), Flatten(),
                      Dense(6, 2, rng)])
    x = rng.standard_normal((2, 9, 3))
    assert net.forward(x).shape == (2, 2)
    net.clear_cache()
    assert gradient_check(net, x, h=1e-6, entries=4) < 1e-3


def test_backward_without_forward():
    layer = Dense(2, 2, np.random.default_rng(0))
    with pytest.raises(exceptions.BackwardError):
        layer.backward(np.ones((1, 2)))
    layer.forward(np.ones((1, 2)))
    layer.backward(np.ones((1, 2)))
    with pytest.raises(exceptions.BackwardError):
        layer.backward(np.ones((1, 2)))
    with pytest.raises(exceptions.BackwardError):
        Tanh().backward(np.ones(2))


def test_dense_rejects_wrong_width():
    with pytest.raises(exceptions.DimensionError):
        Dense(3, 2, np.random.default_rng(0)).forward(np.ones((1, 4)))


def test_state_dict_round_trip_and_mismatch():
    a = mlp(4, [8], 2, np.random.default_rng(0))
    b = mlp(4, [8], 2, np.random.default_rng(1))
    b.load_state_dict(a.state_dict("net/"), "net/")
    x = np.random.default_rng(2).standard_normal((3, 4))
    np.testing.assert_array_equal(a.forward(x), b.forward(x))
    assert sorted(a.state_dict()) == ["0/bias", "0/weight", "2/bias", "2/weight"]
    assert a.n_parameters() == 4 * 8 + 8 + 8 * 2 + 2

    with pytest.raises(exceptions.ArchitectureError, match="missing tensor"):
        b.load_state_dict({})
    with pytest.raises(exceptions.ArchitectureError, match="shape"):
        mlp(4, [9], 2, np.random.default_rng(0)).load_state_dict(a.state_dict())


def test_gradients_accumulate_until_zeroed():
    rng = np.random.default_rng(0)
    layer = Dense(2, 1, rng)
    x = np.ones((1, 2))
    for _ in range(2):
        layer.forward(x)
        layer.backward(np.ones((1, 1)))
    np.testing.assert_allclose(layer.grads["bias"], [2.0])
    layer.zero_grad()
    np.testing.assert_allclose(layer.grads["bias"], [0.0])


def test_adam_fits_a_linear_map():
    rng = np.random.default_rng(0)
    layer = Dense(3, 1, rng)
    target = np.array([[1.0], [-2.0], [0.5]])
    x = rng.standard_normal((64, 3))
    y = x @ target
    optimizer = Adam(list(layer.named_tensors()), lr=0.05)
    start = float(np.mean((layer.forward(x) - y) ** 2))
    layer.clear_cache()
    for _ in range(500):
        layer.zero_grad()
        error = layer.forward(x) - y
        layer.backward(2.0 * error / len(x))
        optimizer.step()
    final = float(np.mean((layer.forward(x) - y) ** 2))
    assert final < 0.01 * start


def test_clip_grad_norm():
    layer = Dense(2, 2, np.random.default_rng(0))
    layer.grads = {"weight": np.full((2, 2), 3.0), "bias": np.full(2, 4.0)}
    tensors = list(layer.named_tensors())
    norm = global_norm(tensors)
    assert norm == pytest.approx(math.sqrt(4 * 9 + 2 * 16))
    assert clip_grad_norm(tensors, 1.0) == pytest.approx(norm)
    assert global_norm(tensors) == pytest.approx(1.0)
    assert clip_grad_norm(tensors, 10.0) == pytest.approx(1.0)
    assert global_norm(tensors) == pytest.approx(1.0)


def test_gaussian_head():
    head = GaussianHead(4, 0.1)
    mean = np.array([[0.1, -0.2, 0.3, 0.0]])
    action = mean + 0.05
    z = 0.5
    expected = 4 * (-0.5 * z * z - math.log(0.1) - 0.5 * math.log(2 * math.pi))
    assert head.log_prob(mean, action)[0] == pytest.approx(expected)
    np.testing.assert_allclose(head.log_prob_grad(mean, action), np.full((1, 4), 5.0))
    assert head.entropy() == pytest.approx(4 * (math.log(0.1) + 0.5 * math.log(2 * math.pi * math.e)))
    samples = head.sample(np.zeros((20000, 4)), np.random.default_rng(0))
    assert samples.std() == pytest.approx(0.1, rel=0.02)
