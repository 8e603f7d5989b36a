#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
张量自动微分模块测试
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', 'src'))

from errors import ConfigError, NonFiniteGradientError, NumericalError, ShapeError
from tensor_autodiff import (LEAKY_SLOPE, SGD, Adam, GeneratorModel, Tape, add, add_bias, backward, exp,
                             forward, init_generator, leaky_relu, log, log_mean_exp_eps,
                             make_optimizer, matmul, mean_all, pairwise_sq_dist, relu, scale,
                             sigmoid, sum_all, tanh)


def _dual_loss(model, x, z, beta, eps):
    tape = Tape()
    y, _ = model.trace(tape, tape.constant(z))
    dist = pairwise_sq_dist(tape.constant(x), y)
    loss = scale(mean_all(log_mean_exp_eps(scale(dist, beta), eps)), -1.0)
    return tape, loss


def _numeric_loss(model, x, z, beta, eps):
    y = forward(model, z)
    dist = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    a = beta * dist
    row_max = a.max(axis=1, keepdims=True)
    log_mean = row_max[:, 0] + np.log(np.exp(a - row_max).mean(axis=1))
    return -float(np.mean(np.logaddexp(log_mean, np.log(eps))))


def _gradient_relative_error(seed):
    rng = np.random.default_rng(seed)
    model = init_generator(3, 2, [5], rng, activation="tanh")
    x = rng.standard_normal((6, 2))
    z = rng.standard_normal((6, 3))
    beta, eps = -0.7, 1e-3
    tape, loss = _dual_loss(model, x, z, beta, eps)
    analytic = np.concatenate([g.ravel() for g in backward(tape, loss)])

    flat = model.flat_parameters()
    shapes = [p.shape for p in model.parameters()]
    numeric = np.zeros_like(flat)
    h = 1e-6
    for i in range(flat.size):
        values = []
        for sign in (1.0, -1.0):
            shifted = flat.copy()
            shifted[i] += sign * h
            params, cursor = [], 0
            for shape in shapes:
                size = int(np.prod(shape))
                params.append(shifted[cursor:cursor + size].reshape(shape))
                cursor += size
            values.append(_numeric_loss(model.with_parameters(params), x, z, beta, eps))
        numeric[i] = (values[0] - values[1]) / (2 * h)
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)


def test_gradient_matches_finite_differences():
    for seed in range(10):
        assert _gradient_relative_error(seed) < 1e-4


def _weighted_total(tape, out, rng):
    """Σ u_i·out_ij·v_j，让每个输出元素的梯度各不相同"""
    u = tape.constant(rng.uniform(0.5, 1.5, size=(1, out.shape[0])))
    v = tape.constant(rng.uniform(0.5, 1.5, size=(out.shape[1], 1)))
    return sum_all(matmul(matmul(u, out), v))


def _primitive_relative_error(build, inputs, seed, h=1e-5):
    """build(tape, *tensors) 返回标量；比较解析梯度与中心差分"""
    tape = Tape()
    loss = build(tape, np.random.default_rng(seed), *[tape.parameter(a) for a in inputs])
    analytic = np.concatenate([g.ravel() for g in backward(tape, loss)])

    def value(arrays):
        t = Tape()
        return float(build(t, np.random.default_rng(seed), *[t.constant(a) for a in arrays]).data)

    numeric = []
    for k, a in enumerate(inputs):
        for idx in np.ndindex(a.shape):
            shifted = []
            for sign in (1.0, -1.0):
                arrays = [b.copy() for b in inputs]
                arrays[k][idx] += sign * h
                shifted.append(value(arrays))
            numeric.append((shifted[0] - shifted[1]) / (2 * h))
    numeric = np.array(numeric)
    return np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)


def _away_from_zero(rng, shape):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 2.0, size=shape)


PRIMITIVE_CASES = {
    "relu": (lambda t, r, a: _weighted_total(t, relu(a), r),
             lambda rng: [_away_from_zero(rng, (3, 4))]),
    "leaky_relu": (lambda t, r, a: _weighted_total(t, leaky_relu(a), r),
                   lambda rng: [_away_from_zero(rng, (3, 4))]),
    "sigmoid": (lambda t, r, a: _weighted_total(t, sigmoid(a), r),
                lambda rng: [rng.standard_normal((3, 4)) * 3.0]),
    "tanh": (lambda t, r, a: _weighted_total(t, tanh(a), r),
             lambda rng: [rng.standard_normal((3, 4))]),
    "exp": (lambda t, r, a: _weighted_total(t, exp(a), r),
            lambda rng: [rng.standard_normal((3, 4))]),
    "log": (lambda t, r, a: _weighted_total(t, log(a), r),
            lambda rng: [rng.uniform(0.5, 3.0, size=(3, 4))]),
    "sum_all": (lambda t, r, a: sum_all(a),
                lambda rng: [rng.standard_normal((3, 4))]),
    "mean_all": (lambda t, r, a: mean_all(a),
                 lambda rng: [rng.standard_normal((3, 4))]),
    "add": (lambda t, r, a, b: _weighted_total(t, add(a, b), r),
            lambda rng: [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]),
    "add_bias": (lambda t, r, a, b: _weighted_total(t, add_bias(a, b), r),
                 lambda rng: [rng.standard_normal((3, 4)), rng.standard_normal(4)]),
    "matmul": (lambda t, r, a, b: _weighted_total(t, matmul(a, b), r),
               lambda rng: [rng.standard_normal((3, 2)), rng.standard_normal((2, 4))]),
    "pairwise_sq_dist": (lambda t, r, a, b: _weighted_total(t, pairwise_sq_dist(a, b), r),
                         lambda rng: [rng.standard_normal((3, 2)), rng.standard_normal((4, 2))]),
    "log_mean_exp_eps": (lambda t, r, a: sum_all(log_mean_exp_eps(a, 1e-3)),
                         lambda rng: [rng.standard_normal((3, 4))]),
}


def test_each_primitive_matches_finite_differences():
    for name, (build, make_inputs) in PRIMITIVE_CASES.items():
        rng = np.random.default_rng(11)
        for seed in range(100):
            error = _primitive_relative_error(build, make_inputs(rng), seed)
            assert error < 1e-4, (name, seed, error)


def test_sum_of_parameters_has_unit_gradient():
    tape = Tape()
    a = tape.parameter(np.random.default_rng(0).standard_normal((2, 3)))
    b = tape.parameter(np.zeros(5))
    grads = backward(tape, sum_all(a))
    np.testing.assert_array_equal(grads[0], np.ones((2, 3)))
    np.testing.assert_array_equal(grads[1], np.zeros(5))


def test_squared_norm_gradient():
    rng = np.random.default_rng(12)
    W = rng.standard_normal((3, 2))
    z = rng.standard_normal((2, 1))
    tape = Tape()
    w = tape.parameter(W)
    wz = matmul(w, tape.constant(z))
    # 每行一个标量坐标，与原点的平方距离之和即 ||Wz||²
    loss = sum_all(pairwise_sq_dist(wz, tape.constant(np.zeros((1, 1)))))
    assert np.isclose(float(loss.data), float(np.sum((W @ z) ** 2)))
    (grad,) = backward(tape, loss)
    np.testing.assert_allclose(grad, 2.0 * (W @ z) @ z.T, rtol=1e-12, atol=1e-12)


def test_composition_follows_chain_rule():
    x = np.random.default_rng(13).standard_normal((2, 3))
    tape = Tape()
    p = tape.parameter(x)
    (grad,) = backward(tape, sum_all(exp(scale(p, 2.0))))
    np.testing.assert_allclose(grad, 2.0 * np.exp(2.0 * x), rtol=1e-12)

    tape = Tape()
    p = tape.parameter(x)
    (grad,) = backward(tape, sum_all(scale(sigmoid(p), 3.0)))
    s = 1.0 / (1.0 + np.exp(-x))
    np.testing.assert_allclose(grad, 3.0 * s * (1.0 - s), rtol=1e-12)


def test_forward_zero_model_outputs_zeros():
    model = init_generator(4, 3, [5], np.random.default_rng(0))
    zero = model.with_parameters([np.zeros_like(p) for p in model.parameters()])
    z = np.random.default_rng(1).standard_normal((6, 4))
    np.testing.assert_array_equal(forward(zero, z), np.zeros((6, 3)))


def test_forward_identity_layer_passes_input():
    model = GeneratorModel(3, 3, [], [np.eye(3)], [np.zeros(3)], "leaky_relu", "identity")
    z = np.random.default_rng(2).standard_normal((5, 3))
    np.testing.assert_array_equal(forward(model, z), z)


def _forward_by_loops(model, z):
    rows = []
    for row in z:
        h = [float(v) for v in row]
        for layer, (w, b) in enumerate(zip(model.weights, model.biases)):
            out = []
            for j in range(w.shape[1]):
                acc = float(b[j])
                for i in range(w.shape[0]):
                    acc += h[i] * float(w[i, j])
                if layer < len(model.weights) - 1:
                    acc = acc if acc > 0 else LEAKY_SLOPE * acc
                out.append(acc)
            h = out
        rows.append(h)
    return np.array(rows)


def test_forward_matches_loop_reimplementation():
    rng = np.random.default_rng(14)
    model = init_generator(2, 3, [16], rng, activation="leaky_relu")
    model = model.with_parameters([p + rng.standard_normal(p.shape) * 0.1 for p in model.parameters()])
    z = rng.standard_normal((9, 2))
    np.testing.assert_allclose(forward(model, z), _forward_by_loops(model, z), rtol=0, atol=1e-12)
    tape = Tape()
    out, _ = model.trace(tape, tape.constant(z))
    np.testing.assert_allclose(out.data, _forward_by_loops(model, z), rtol=0, atol=1e-12)


def test_pairwise_sq_dist_matches_brute_force():
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal((4, 3)), rng.standard_normal((5, 3))
    tape = Tape()
    out = pairwise_sq_dist(tape.constant(x), tape.constant(y)).data
    expected = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    np.testing.assert_allclose(out, expected, atol=1e-12)
    assert np.all(out >= 0)


def test_log_mean_exp_eps_does_not_underflow():
    tape = Tape()
    out = log_mean_exp_eps(tape.constant(np.array([[-1000.0, -1001.0]])), 0.0).data
    np.testing.assert_allclose(out, [-1000.0 + np.log((1 + np.exp(-1.0)) / 2)], rtol=1e-12)
    floored = log_mean_exp_eps(tape.constant(np.array([[-1000.0, -1001.0]])), 1e-10).data
    np.testing.assert_allclose(floored, [np.log(1e-10)], rtol=1e-9)


def test_backward_requires_scalar_loss():
    tape = Tape()
    p = tape.parameter(np.ones((2, 2)))
    try:
        backward(tape, scale(p, 2.0))
        assert False, "非标量损失应报错"
    except ShapeError:
        pass
    grads = backward(tape, sum_all(scale(p, 2.0)))
    np.testing.assert_array_equal(grads[0], np.full((2, 2), 2.0))


def test_unused_parameter_gets_zero_gradient():
    tape = Tape()
    used = tape.parameter(np.array([1.0, 2.0]))
    unused = tape.parameter(np.zeros((3,)))
    grads = backward(tape, sum_all(used))
    np.testing.assert_array_equal(grads[1], np.zeros(3))
    assert unused.requires_grad


def test_non_finite_values_are_rejected_on_tape():
    tape = Tape()
    try:
        scale(tape.constant(np.array([1e308])), 1e10)
        assert False, "溢出应报 NumericalError"
    except NumericalError:
        pass


def test_trace_agrees_with_forward():
    rng = np.random.default_rng(3)
    for activation in ("relu", "leaky_relu", "tanh"):
        model = init_generator(4, 3, [8, 8], rng, activation=activation, output_activation="sigmoid")
        z = rng.standard_normal((7, 4))
        tape = Tape()
        out, params = model.trace(tape, tape.constant(z))
        np.testing.assert_allclose(out.data, forward(model, z), atol=1e-12)
        assert len(params) == 6
        assert np.all((out.data > 0) & (out.data < 1))


def test_init_generator_shapes_and_zero_biases():
    model = init_generator(16, 5, [32, 32], np.random.default_rng(0))
    assert [w.shape for w in model.weights] == [(16, 32), (32, 32), (32, 5)]
    assert all(np.all(b == 0) for b in model.biases)
    assert model.parameter_count == 16 * 32 + 32 + 32 * 32 + 32 + 32 * 5 + 5
    assert model.flat_parameters().size == model.parameter_count
    bound = np.sqrt(6.0 / (16 + 32))
    assert np.all(np.abs(model.weights[0]) <= bound)


def test_sgd_step_is_exact():
    model = init_generator(2, 1, [], np.random.default_rng(0))
    grads = [np.ones_like(p) for p in model.parameters()]
    updated = SGD(0.5).step(model, grads)
    for before, after in zip(model.parameters(), updated.parameters()):
        np.testing.assert_allclose(after, before - 0.5)


def test_sgd_scalar_example():
    model = GeneratorModel(1, 1, [], [np.array([[1.0]])], [np.array([0.0])])
    updated = SGD(0.1).step(model, [np.array([[2.0]]), np.array([0.0])])
    assert np.isclose(updated.weights[0][0, 0], 0.8)
    assert updated.biases[0][0] == 0.0


def test_zero_gradient_leaves_parameters_unchanged():
    model = init_generator(2, 3, [4], np.random.default_rng(5))
    zeros = [np.zeros_like(p) for p in model.parameters()]
    for optimizer in (SGD(0.5), Adam(1e-2)):
        updated = model
        for _ in range(3):
            updated = optimizer.step(updated, zeros)
        for before, after in zip(model.parameters(), updated.parameters()):
            np.testing.assert_array_equal(after, before)


def test_adam_first_step_moves_by_learning_rate():
    model = init_generator(2, 1, [3], np.random.default_rng(0))
    grads = [np.full(p.shape, 3.0) for p in model.parameters()]
    updated = Adam(1e-2).step(model, grads)
    for before, after in zip(model.parameters(), updated.parameters()):
        np.testing.assert_allclose(before - after, 1e-2, rtol=1e-6)


def test_optimizer_rejects_bad_gradients():
    model = init_generator(2, 1, [3], np.random.default_rng(0))
    grads = [np.zeros_like(p) for p in model.parameters()]
    grads[1][0] = np.nan
    try:
        Adam(1e-3).step(model, grads)
        assert False, "NaN 梯度应报错"
    except NonFiniteGradientError as e:
        assert e.parameter_index == 1 and e.bad_count == 1
    try:
        SGD(1e-3).step(model, grads[:-1])
        assert False, "梯度个数不符应报错"
    except ShapeError:
        pass


def test_make_optimizer():
    assert isinstance(make_optimizer("adam", 1e-3), Adam)
    assert isinstance(make_optimizer("sgd", 1e-3), SGD)
    try:
        make_optimizer("rmsprop", 1e-3)
        assert False
    except ConfigError:
        pass


def test_generator_copy_is_independent():
    model = init_generator(2, 2, [4], np.random.default_rng(0))
    clone = model.copy()
    clone.weights[0][0, 0] += 1.0
    assert model.weights[0][0, 0] != clone.weights[0][0, 0]
    assert model.descriptor() == clone.descriptor()


if __name__ == "__main__":
    for name, func in list(globals().items()):
        if name.startswith("test_") and callable(func):
            func()
            print(f"✅ {name}")
