import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radarbeam.nn import (AdamState, LstmCellParams, TrainConfig, adam_step, avgpool2,
                          avgpool2_grad, conv2d, conv2d_grad, dense, dense_grad, grad_check,
                          load_checkpoint, lr_schedule, lstm_cell, lstm_sequence,
                          lstm_sequence_grad, numerical_grad, rel_error, relu, relu_grad,
                          save_checkpoint, softmax, softmax_xent)

TOL = 1e-4
DRAWS = 20


def _max_rel(analytic, numeric):
    return float(np.max(rel_error(analytic, numeric)))


def _weighted(y, w):
    return float(np.sum(y * w))


# -- dense ------------------------------------------------------------------

def test_dense_identity_and_bias():
    x = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(dense(x, np.eye(3), np.zeros(3))[0], x)
    b = np.array([1.0, -2.0])
    assert np.array_equal(dense(np.zeros((1, 3)), np.ones((2, 3)), b)[0], b[None])


def test_dense_shape_mismatch():
    with pytest.raises(ValueError):
        dense(np.zeros((2, 3)), np.zeros((4, 2)), np.zeros(4))


def test_dense_gradients():
    for seed in range(DRAWS):
        rng = np.random.default_rng(seed)
        x, W, b = rng.normal(size=(3, 5)), rng.normal(size=(4, 5)), rng.normal(size=4)
        w = rng.normal(size=(3, 4))
        dx, dW, db = dense_grad(w, dense(x, W, b)[1])
        f = lambda: _weighted(dense(x, W, b)[0], w)
        assert _max_rel(dx, numerical_grad(f, x)) < TOL
        assert _max_rel(dW, numerical_grad(f, W)) < TOL
        assert _max_rel(db, numerical_grad(f, b)) < TOL


def test_relu_gradient():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 6))
    y, mask = relu(x)
    assert np.all(y >= 0) and np.array_equal(y[x > 0], x[x > 0])
    w = rng.normal(size=x.shape)
    assert _max_rel(relu_grad(w, mask), numerical_grad(lambda: _weighted(relu(x)[0], w), x)) < TOL


# -- conv / pool ------------------------------------------------------------

def test_conv_unit_kernel_is_identity():
    x = np.random.default_rng(1).normal(size=(1, 2, 5, 4))
    assert np.array_equal(conv2d(x, np.ones((1, 1, 1, 1)))[0], x)


def test_conv_averaging_kernel_border_scaling():
    x = np.full((1, 1, 5, 6), 2.0)
    y = conv2d(x, np.full((1, 1, 3, 3), 1 / 9))[0][0, 0]
    assert np.allclose(y[1:-1, 1:-1], 2.0)
    assert np.isclose(y[0, 0], 2.0 * 4 / 9) and np.isclose(y[0, 2], 2.0 * 6 / 9)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(2)
    x, k, b = rng.normal(size=(2, 3, 5, 4)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    y = conv2d(x, k, b)[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros_like(y)
    for f in range(3):
        for n in range(3):
            for i in range(5):
                for j in range(4):
                    ref[f, n, i, j] = np.sum(xp[:, n, i:i + 3, j:j + 3] * k[f]) + b[f]
    assert np.allclose(y, ref, atol=1e-12)


def test_conv_errors():
    with pytest.raises(ValueError):
        conv2d(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 2, 2)))
    with pytest.raises(ValueError):
        conv2d(np.zeros((2, 1, 4, 4)), np.zeros((1, 3, 3, 3)))


def test_conv_gradients():
    for seed in range(DRAWS):
        rng = np.random.default_rng(seed)
        x, k, b = rng.normal(size=(2, 2, 5, 4)), rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
        w = rng.normal(size=(3, 2, 5, 4))
        dx, dk, db = conv2d_grad(w, conv2d(x, k, b)[1])
        f = lambda: _weighted(conv2d(x, k, b)[0], w)
        assert _max_rel(dx, numerical_grad(f, x)) < TOL
        assert _max_rel(dk, numerical_grad(f, k)) < TOL
        assert _max_rel(db, numerical_grad(f, b)) < TOL
    assert conv2d_grad(w, conv2d(x, k)[1], need_input_grad=False)[0] is None


def test_avgpool_values():
    y, _ = avgpool2(np.full((2, 1, 4, 6), 3.0))
    assert y.shape == (2, 1, 2, 3) and np.all(y == 3.0)
    assert avgpool2(np.array([[1.0, 2.0], [3.0, 4.0]]))[0][0, 0] == 2.5


def test_avgpool_odd_dims_replicate_edge():
    x = np.arange(15.0).reshape(3, 5)
    y = avgpool2(x)[0]
    assert y.shape == (2, 3)
    assert y[1, 2] == x[2, 4] and y[0, 2] == (x[0, 4] + x[1, 4]) / 2


@pytest.mark.parametrize("shape", [(2, 1, 4, 6), (1, 2, 5, 3)])
def test_avgpool_gradients(shape):
    for seed in range(DRAWS):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=shape)
        y, cache = avgpool2(x)
        w = rng.normal(size=y.shape)
        assert _max_rel(avgpool2_grad(w, cache), numerical_grad(lambda: _weighted(avgpool2(x)[0], w), x)) < TOL


# -- LSTM -------------------------------------------------------------------

def _zero_lstm(D=2, H=3):
    return LstmCellParams(np.zeros((4 * H, D)), np.zeros((4 * H, H)), np.zeros(4 * H))


def test_lstm_zero_weights():
    p = _zero_lstm()
    h, c, _ = lstm_cell(np.ones((1, 2)), np.zeros((1, 3)), np.zeros((1, 3)), p)
    assert np.all(h == 0) and np.all(c == 0)
    h, c, _ = lstm_cell(np.ones((1, 2)), np.zeros((1, 3)), np.full((1, 3), 2.0), p)
    assert np.allclose(c, 1.0, atol=1e-15)
    assert np.allclose(h, 0.5 * math.tanh(1.0), atol=1e-15)
    assert abs(h[0, 0] - 0.3808) < 1e-4


def test_lstm_shape_errors():
    with pytest.raises(ValueError):
        LstmCellParams(np.zeros((8, 2)), np.zeros((8, 3)), np.zeros(8))
    with pytest.raises(ValueError):
        lstm_cell(np.zeros((1, 5)), np.zeros((1, 3)), np.zeros((1, 3)), _zero_lstm())


def test_lstm_unroll_gradients():
    for seed in range(DRAWS):
        rng = np.random.default_rng(seed)
        D, H = 3, 4
        p = LstmCellParams(rng.normal(size=(4 * H, D)), rng.normal(size=(4 * H, H)), rng.normal(size=4 * H))
        xs = rng.normal(size=(2, 3, D))
        w = rng.normal(size=(2, 3, H))
        hs, caches = lstm_sequence(xs, p)
        dxs, (dWx, dWh, db) = lstm_sequence_grad(w, caches, p)
        f = lambda: _weighted(lstm_sequence(xs, p)[0], w)
        assert _max_rel(dxs, numerical_grad(f, xs)) < TOL
        assert _max_rel(dWx, numerical_grad(f, p.input_weights)) < TOL
        assert _max_rel(dWh, numerical_grad(f, p.recurrent_weights)) < TOL
        assert _max_rel(db, numerical_grad(f, p.biases)) < TOL


# -- softmax cross-entropy --------------------------------------------------

def test_uniform_logits_loss_is_ln64():
    loss, _ = softmax_xent(np.zeros(64), 17)
    assert abs(loss - math.log(64)) < 1e-9
    assert abs(math.log(64) - 4.15888) < 1e-5


def test_saturated_loss():
    logits = np.zeros(64)
    logits[5] = 30.0
    assert softmax_xent(logits, 5)[0] < 1e-9 * 100  # 63 e^-30 ~ 5.9e-12


def test_softmax_xent_gradient():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(4, 10))
    labels = rng.integers(0, 10, 4)
    loss, g = softmax_xent(logits, labels)
    num = numerical_grad(lambda: softmax_xent(logits, labels)[0], logits)
    assert _max_rel(g, num) < 1e-6
    assert np.allclose(g.sum(axis=1), 0, atol=1e-15)
    p = softmax(logits)
    onehot = np.eye(10)[labels]
    assert np.allclose(g, (p - onehot) / 4)


@settings(max_examples=50)
@given(st.lists(st.floats(-20, 20), min_size=2, max_size=16), st.floats(-50, 50))
def test_softmax_xent_shift_invariant(vals, shift):
    logits = np.array(vals)
    assert abs(softmax_xent(logits, 0)[0] - softmax_xent(logits + shift, 0)[0]) < 1e-9


def test_softmax_xent_label_errors():
    with pytest.raises(ValueError):
        softmax_xent(np.zeros(4), 4)
    with pytest.raises(ValueError):
        softmax_xent(np.zeros((2, 4)), [0])


# -- Adam / schedule --------------------------------------------------------

def test_adam_zero_gradient_from_fresh_state():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState(lr=0.1)
    adam_step(params, {"w": np.zeros(2)}, state)
    assert np.array_equal(params["w"], [1.0, -2.0]) and state.step == 1


@settings(max_examples=30)
@given(st.integers(0, 50), st.lists(st.floats(0, 10), min_size=3, max_size=3))
def test_adam_zero_gradient_fixed_point_without_momentum(step, v):
    params = {"w": np.array([0.5, 1.5, -3.0])}
    state = AdamState(lr=0.01, step=step, m={"w": np.zeros(3)}, v={"w": np.array(v)})
    adam_step(params, {"w": np.zeros(3)}, state)
    assert np.array_equal(params["w"], [0.5, 1.5, -3.0])


@pytest.mark.parametrize("g", [1.0, -1.0, 3.7, -1e-3])
def test_adam_first_step_is_lr_sign(g):
    params = {"w": np.array([0.0])}
    adam_step(params, {"w": np.array([g])}, AdamState(lr=0.01))
    assert abs(params["w"][0] + 0.01 * math.copysign(1, g)) < 1e-6


def test_adam_two_steps_hand_values():
    params = {"w": np.array([0.0])}
    state = AdamState(lr=0.1)
    # step 1: m = 0.1, v = 0.001, m_hat = v_hat = 1
    adam_step(params, {"w": np.array([1.0])}, state)
    assert abs(params["w"][0] - (-0.1 / (1 + 1e-8))) < 1e-12
    # step 2: m = 0.19, v = 0.001999, bias corrections 0.19 and 0.001999
    adam_step(params, {"w": np.array([1.0])}, state)
    assert abs(params["w"][0] - (-0.2 / (1 + 1e-8))) < 1e-12
    assert abs(state.m["w"][0] - 0.19) < 1e-15 and abs(state.v["w"][0] - 0.001999) < 1e-15


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


def test_lr_schedule_values():
    cfg = TrainConfig(lr=0.01, decay_gamma=0.01, decay_every_epochs=20)
    assert all(lr_schedule(e, cfg) == 0.01 for e in range(20))
    assert abs(lr_schedule(20, cfg) - 1e-4) < 1e-18
    assert abs(lr_schedule(45, cfg) - 1e-6) < 1e-20
    flat = TrainConfig(decay_gamma=1.0)
    assert {lr_schedule(e, flat) for e in range(100)} == {flat.lr}
    with pytest.raises(ValueError):
        lr_schedule(-1, cfg)


def test_train_config_validation():
    for kw in ({"epochs": 0}, {"lr": 0.0}, {"decay_gamma": -1.0}, {"batch_size": 0}, {"seed": -1}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


# -- gradient checker -------------------------------------------------------

class _Linear:
    """Softmax regression: loss is nonlinear but logits are linear in W."""

    def __init__(self, seed):
        rng = np.random.default_rng(seed)
        self.params = {"W": rng.normal(size=(5, 4)), "b": rng.normal(size=5)}

    def loss_and_grads(self, x, labels):
        y, cache = dense(x, self.params["W"], self.params["b"])
        loss, g = softmax_xent(y, labels)
        _, dW, db = dense_grad(g, cache)
        return loss, {"W": dW, "b": db}


class _Affine:
    """Loss linear in the parameters: central differences are exact.

    Small nonzero integers keep every gradient entry >= 1 in magnitude, so
    the relative error measures the differencing, not cancellation.
    """

    def __init__(self, seed):
        rng = np.random.default_rng(seed)
        ints = lambda shape: rng.choice([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0], size=shape)
        self.params = {"W": ints((3, 4)), "b": ints(3)}
        self.w = ints((1, 3))
        self.x = ints((1, 4))

    def loss_and_grads(self, x, labels):
        y, cache = dense(x, self.params["W"], self.params["b"])
        _, dW, db = dense_grad(self.w, cache)
        return float(np.sum(y * self.w)), {"W": dW, "b": db}


def test_grad_check_linear_model_exact():
    for seed in range(20):
        m = _Affine(seed)
        assert grad_check(m, m.x, None, fraction=1.0) < 1e-9


def test_grad_check_softmax_regression():
    rng = np.random.default_rng(1)
    m = _Linear(0)
    assert grad_check(m, rng.normal(size=(6, 4)), rng.integers(0, 5, 6), fraction=1.0) < TOL


def test_grad_check_needs_float64():
    m = _Affine(0)
    m.params["W"] = m.params["W"].astype(np.float32)
    with pytest.raises(TypeError):
        grad_check(m, np.zeros((2, 4)), None)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    params = {"a": rng.normal(size=(2, 3, 4, 5)), "b": rng.normal(size=7), "c": np.float64(2.5) * np.ones((1,))}
    save_checkpoint(tmp_path / "ck", params, {"model": "toy"})
    back, meta = load_checkpoint(tmp_path / "ck")
    assert meta["model"] == "toy" and set(back) == set(params)
    assert all(np.array_equal(back[k], params[k]) and back[k].shape == params[k].shape for k in params)
