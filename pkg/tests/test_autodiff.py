#!/usr/bin/env python3
"""
Tests for the autodiff engine: kernel gradients against central finite
differences, tape behaviour, AdamW/Adam and the plateau schedule.
"""

import pytest
import numpy as np
import os
import sys

# Add parent directory to path to import the engine
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from engine import (
    KERNELS, ComputeGraph, OptState, Parameter, PlateauState,
    adam_step, adamw_step, backward, plateau_step,
)
from utils.errors import ConfigError, NumericalError, ShapeError

EPS = 1e-6
TOLERANCE = 1e-4
N_INSTANCES = 20


def away_from_zero(x, margin=1e-2):
    """Keep values clear of kinks (relu, |x|) so central differences stay smooth"""
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def loss_value(kind, arrays, attrs, probe):
    out, _ = KERNELS[kind].forward(arrays, attrs)
    return float(np.sum(out * probe))


def analytic_grads(kind, arrays, attrs, probe):
    graph = ComputeGraph()
    inputs = [graph.parameter(Parameter(f"p{i}", a.copy())) for i, a in enumerate(arrays)]
    out = graph.apply(kind, inputs, **attrs)
    weighted = graph.apply('mul', [out, graph.constant(probe)])
    loss = graph.apply('mean', [weighted])
    grads = backward(graph, loss)
    # the mean divides by the probe size; undo it to compare against the plain sum
    return [grads[f"p{i}"] * probe.size for i in range(len(arrays))]


def numeric_grads(kind, arrays, attrs, probe):
    result = []
    for i, array in enumerate(arrays):
        grad = np.zeros_like(array)
        for index in np.ndindex(array.shape):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[i][index] += EPS
            minus[i][index] -= EPS
            grad[index] = (loss_value(kind, plus, attrs, probe) - loss_value(kind, minus, attrs, probe)) / (2 * EPS)
        result.append(grad)
    return result


def relative_error(analytic, numeric):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_kernel(kind, make_inputs, attrs=None):
    """Run the finite-difference check over seeded random instances"""
    attrs = attrs or {}
    for seed in range(N_INSTANCES):
        rng = np.random.default_rng(seed)
        arrays = [np.asarray(a, dtype=np.float64) for a in make_inputs(rng)]
        out, _ = KERNELS[kind].forward(arrays, attrs)
        probe = np.asarray(rng.normal(size=np.shape(out)))
        analytic = analytic_grads(kind, arrays, attrs, probe)
        numeric = numeric_grads(kind, arrays, attrs, probe)
        for i, (a, n) in enumerate(zip(analytic, numeric)):
            assert a.shape == arrays[i].shape
            error = relative_error(a, n)
            assert error <= TOLERANCE, f"{kind} input {i} seed {seed}: relative error {error:.2e}"


def test_add_broadcast_gradient():
    check_kernel('add', lambda rng: [rng.normal(size=(4, 3)), rng.normal(size=(1, 3))])


def test_mul_broadcast_gradient():
    check_kernel('mul', lambda rng: [rng.normal(size=(4, 3)), rng.normal(size=(3,))])


def test_matmul_gradient():
    check_kernel('matmul', lambda rng: [rng.normal(size=(4, 3)), rng.normal(size=(3, 2))])


def test_matmul_transposed_gradient():
    check_kernel('matmul', lambda rng: [rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 5))],
                 attrs={'transpose_a': True})
    check_kernel('matmul', lambda rng: [rng.normal(size=(4, 3)), rng.normal(size=(2, 3))],
                 attrs={'transpose_b': True})


def test_elementwise_gradients():
    for kind in ('relu', 'tanh', 'sigmoid', 'exp'):
        check_kernel(kind, lambda rng: [away_from_zero(rng.normal(size=(3, 4)))])


def test_log_gradients():
    check_kernel('log', lambda rng: [rng.uniform(0.5, 2.0, size=(3, 4))])
    check_kernel('log', lambda rng: [away_from_zero(rng.normal(size=(3, 4)))],
                 attrs={'magnitude': True, 'eps': 1e-6})


def test_softmax_gradient():
    check_kernel('softmax', lambda rng: [rng.normal(size=(3, 5))], attrs={'axis': 1})
    check_kernel('softmax', lambda rng: [rng.normal(size=(2, 4, 3))], attrs={'axis': 1})


def test_shape_kernel_gradients():
    check_kernel('concat', lambda rng: [rng.normal(size=(2, 3)), rng.normal(size=(2, 2))], attrs={'axis': 1})
    check_kernel('slice', lambda rng: [rng.normal(size=(2, 5, 3))], attrs={'axis': 1, 'start': 1, 'stop': 3})
    check_kernel('reshape', lambda rng: [rng.normal(size=(2, 3, 4))], attrs={'shape': (2, 12)})
    check_kernel('mean', lambda rng: [rng.normal(size=(3, 4))], attrs={'axis': 0})


def test_embedding_lookup_gradient():
    blocks = [(0, 3), (3, 5)]
    check_kernel('embedding-lookup', lambda rng: [rng.random(size=(4, 5)), rng.normal(size=(5, 2))],
                 attrs={'blocks': blocks})


def test_conv1d_gradient():
    check_kernel('conv1d', lambda rng: [rng.normal(size=(2, 5, 3)), rng.normal(size=(3, 3, 2)),
                                        rng.normal(size=(2,))])


def test_lstm_cell_gradient():
    def make(rng):
        return [rng.normal(size=(3, 2)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4)),
                0.5 * rng.normal(size=(6, 16)), 0.5 * rng.normal(size=(16,))]
    check_kernel('lstm-cell', make)


def test_dropout_gradient_with_fixed_mask():
    check_kernel('dropout', lambda rng: [rng.normal(size=(4, 6))], attrs={'rate': 0.5, 'mode': 'train', 'seed': 7})


def test_layernorm_gradient():
    check_kernel('layernorm', lambda rng: [rng.normal(size=(3, 5)), rng.normal(size=(5,)), rng.normal(size=(5,))])


def test_weighted_cross_entropy_gradient():
    labels = np.array([0, 1, 2, 1])
    weights = np.array([1.2510, 0.5724, 2.2043])
    check_kernel('weighted-cross-entropy', lambda rng: [rng.normal(size=(4, 3))],
                 attrs={'labels': labels, 'weights': weights})


def test_softmax_rows_sum_to_one_and_ignore_shift():
    x = np.random.default_rng(0).normal(size=(4, 3))
    out, _ = KERNELS['softmax'].forward([x], {'axis': 1})
    shifted, _ = KERNELS['softmax'].forward([x + 100.0], {'axis': 1})
    assert np.allclose(out.sum(axis=1), 1.0)
    assert np.allclose(out, shifted)


def test_dropout_eval_is_identity_and_train_is_seeded():
    x = np.ones((50, 40))
    out, _ = KERNELS['dropout'].forward([x], {'rate': 0.3, 'mode': 'eval'})
    assert np.array_equal(out, x)

    first, _ = KERNELS['dropout'].forward([x], {'rate': 0.3, 'mode': 'train', 'seed': 11})
    second, _ = KERNELS['dropout'].forward([x], {'rate': 0.3, 'mode': 'train', 'seed': 11})
    assert np.array_equal(first, second)
    kept = first[first > 0]
    assert np.allclose(kept, 1.0 / 0.7)
    assert 0.6 < (first > 0).mean() < 0.8


def test_lstm_cell_all_zero_inputs():
    zeros = [np.zeros((2, 3)), np.zeros((2, 4)), np.zeros((2, 4)), np.zeros((7, 16)), np.zeros(16)]
    out, _ = KERNELS['lstm-cell'].forward(zeros, {})
    assert out.shape == (2, 8)
    assert np.array_equal(out, np.zeros((2, 8)))


def test_conv1d_identity_kernel():
    x = np.random.default_rng(1).normal(size=(2, 6, 3))
    weight = np.zeros((3, 3, 3))
    weight[1] = np.eye(3)
    out, _ = KERNELS['conv1d'].forward([x, weight, np.zeros(3)], {})
    assert np.allclose(out, x)


def test_conv1d_rejects_even_width():
    with pytest.raises(ShapeError):
        KERNELS['conv1d'].forward([np.zeros((1, 4, 2)), np.zeros((2, 2, 2)), np.zeros(2)], {})


def test_backward_sum_of_squares():
    x = np.array([1.0, -2.0, 3.0])
    graph = ComputeGraph()
    p = graph.parameter(Parameter('x', x))
    loss = graph.apply('mean', [graph.apply('mul', [p, p])])
    grads = backward(graph, loss)
    assert np.allclose(grads['x'], 2.0 * x / x.size)


def test_backward_accumulates_fan_in():
    graph = ComputeGraph()
    p = graph.parameter(Parameter('x', np.array([[1.0, 2.0]])))
    again = graph.parameter(graph.nodes[p.node_id].parameter)
    loss = graph.apply('mean', [graph.apply('add', [p, again])])
    grads = backward(graph, loss)
    assert np.allclose(grads['x'], [[1.0, 1.0]])


def test_unreached_parameter_gets_zero_gradient():
    graph = ComputeGraph()
    used = graph.parameter(Parameter('used', np.ones(3)))
    graph.parameter(Parameter('unused', np.ones(2)))
    grads = backward(graph, graph.apply('mean', [used]))
    assert np.array_equal(grads['unused'], np.zeros(2))


def test_backward_needs_scalar_loss():
    graph = ComputeGraph()
    p = graph.parameter(Parameter('x', np.ones(3)))
    with pytest.raises(ShapeError):
        backward(graph, graph.apply('relu', [p]))


def test_kernel_errors():
    graph = ComputeGraph()
    a = graph.constant(np.ones((2, 3)))
    b = graph.constant(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        graph.apply('matmul', [a, b])
    with pytest.raises(ShapeError):
        graph.apply('no-such-kernel', [a])
    with pytest.raises(NumericalError):
        graph.apply('log', [graph.constant(np.zeros(2))])
    with pytest.raises(NumericalError):
        graph.apply('exp', [graph.constant(np.array([1000.0]))])


def test_debug_graph_flags_non_finite_values():
    graph = ComputeGraph(debug=True)
    x = graph.constant(np.array([np.inf, 1.0]))
    with pytest.raises(NumericalError):
        graph.apply('relu', [x])


def test_adamw_single_step_hand_trace():
    params = {'theta': np.array([1.0])}
    grads = {'theta': np.array([1.0])}
    plain, _ = adamw_step(params, grads, OptState(lr=0.1, weight_decay=0.0))
    decayed, state = adamw_step(params, grads, OptState(lr=0.1, weight_decay=0.01))
    assert abs(plain['theta'][0] - 0.9) < 1e-6
    assert abs(decayed['theta'][0] - 0.899) < 1e-6
    assert state.step == 1


def test_adamw_without_decay_matches_adam():
    rng = np.random.default_rng(3)
    start = {'w': rng.normal(size=(3, 2)), 'b': rng.normal(size=2)}
    w_params, a_params = dict(start), dict(start)
    w_state, a_state = OptState(lr=0.01), OptState(lr=0.01)
    for _ in range(100):
        grads = {name: rng.normal(size=value.shape) for name, value in start.items()}
        w_params, w_state = adamw_step(w_params, grads, w_state)
        a_params, a_state = adam_step(a_params, grads, a_state)
    for name in start:
        assert np.max(np.abs(w_params[name] - a_params[name])) <= 1e-12


def test_adam_couples_weight_decay_into_gradient():
    params = {'theta': np.array([1.0])}
    grads = {'theta': np.array([1.0])}
    adam, _ = adam_step(params, grads, OptState(lr=0.1, weight_decay=0.01))
    # the first bias-corrected step has unit size whatever the gradient
    assert abs(adam['theta'][0] - 0.9) < 1e-6


def test_optimizer_rejects_bad_settings():
    with pytest.raises(ConfigError):
        OptState(lr=0.0)
    with pytest.raises(ConfigError):
        OptState(weight_decay=-1.0)
    with pytest.raises(ShapeError):
        adamw_step({'w': np.ones(2)}, {'w': np.ones(3)}, OptState())


def test_plateau_schedule_hand_trace():
    state = PlateauState(patience=2, factor=0.5, min_lr=1e-6)
    lr = 0.1
    trace = []
    for loss in [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 1.0]:
        lr, state = plateau_step(state, loss, lr)
        trace.append(lr)
    assert trace == [0.1, 0.1, 0.1, 0.1, 0.05, 0.05, 0.05, 0.025]


def test_plateau_floor_at_min_lr():
    state = PlateauState(patience=1, factor=0.5, min_lr=0.01)
    lr = 0.01
    lr, state = plateau_step(state, 1.0, lr)
    for _ in range(6):
        lr, state = plateau_step(state, 2.0, lr)
        assert lr == 0.01


def test_plateau_lr_never_increases():
    rng = np.random.default_rng(5)
    state = PlateauState(patience=1)
    lr = 1e-3
    previous = lr
    for loss in rng.random(60):
        lr, state = plateau_step(state, float(loss), lr)
        assert lr <= previous
        previous = lr


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
