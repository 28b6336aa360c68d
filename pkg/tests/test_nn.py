import numpy as np
import pytest

from ontoparse.nn import (
    MomentumSGD, ParamStore, check_gradients, load_checkpoint, lstm_init,
    lstm_step, save_checkpoint, soft_attention, tensor as T,
)


def test_lstm_zero_weights_zero_hidden():
    w = T.param(np.zeros((20, 8)))
    b = T.param(np.zeros(20))
    h0, c0 = lstm_init(5)
    h, c = lstm_step(w, b, T.const(np.ones(3)), h0, c0)
    assert np.allclose(h.data, 0.0)
    assert np.allclose(c.data, 0.0)


def test_lstm_matches_scalar_reference():
    rng = np.random.default_rng(7)
    hidden, nin = 5, 4
    w = rng.normal(size=(4 * hidden, hidden + nin))
    b = rng.normal(size=4 * hidden)
    x = rng.normal(size=nin)
    h_prev = rng.normal(size=hidden)
    c_prev = rng.normal(size=hidden)

    # straight-line reimplementation of the gated update
    def sig(z):
        return 1.0 / (1.0 + np.exp(-z))
    concat = np.concatenate([h_prev, x])
    pre = w @ concat + b
    i = sig(pre[0:hidden])
    f = sig(pre[hidden:2 * hidden])
    o = sig(pre[2 * hidden:3 * hidden])
    c_hat = np.tanh(pre[3 * hidden:])
    c_want = f * c_prev + i * c_hat
    h_want = o * np.tanh(c_want)

    h, c = lstm_step(T.param(w), T.param(b), T.const(x),
                     T.const(h_prev), T.const(c_prev))
    assert np.allclose(h.data, h_want)
    assert np.allclose(c.data, c_want)


def test_lstm_gradient_through_three_steps():
    params = ParamStore(seed=3)
    w = params.new("w", 20, 9)
    b = params.new("b", 20)
    xs = [np.linspace(-1, 1, 4) * (i + 1) for i in range(3)]

    def loss_fn():
        h, c = lstm_init(5)
        for x in xs:
            h, c = lstm_step(w, b, T.const(x), h, c)
        return T.dot(h, h)

    worst, _ = check_gradients(loss_fn, params)
    assert worst < 1e-4


def test_attention_single_key_is_identity():
    params = ParamStore(seed=1)
    wb = params.new("wb", 6, 4)
    ws = params.new("ws", 6, 5)
    v = params.new("v", 6)
    key = T.const(np.arange(4.0))
    alpha, context = soft_attention([key], T.const(np.ones(5)), wb, ws, v)
    assert np.allclose(alpha.data, [1.0])
    assert np.allclose(context.data, key.data)


def test_attention_identical_keys_split_evenly():
    params = ParamStore(seed=2)
    wb = params.new("wb", 6, 4)
    ws = params.new("ws", 6, 5)
    v = params.new("v", 6)
    key = T.const(np.arange(4.0))
    alpha, _ = soft_attention([key, key], T.const(np.ones(5)), wb, ws, v)
    assert np.allclose(alpha.data, [0.5, 0.5])


def test_attention_weights_form_simplex():
    rng = np.random.default_rng(0)
    params = ParamStore(seed=5)
    wb = params.new("wb", 6, 4)
    ws = params.new("ws", 6, 5)
    v = params.new("v", 6)
    for _ in range(1000):
        keys = [T.const(rng.normal(size=4)) for _ in range(rng.integers(1, 7))]
        alpha, _ = soft_attention(keys, T.const(rng.normal(size=5)), wb, ws, v)
        assert np.all(alpha.data >= 0)
        assert abs(alpha.data.sum() - 1.0) < 1e-9


def test_attention_gradients():
    params = ParamStore(seed=9)
    wb = params.new("wb", 6, 4)
    ws = params.new("ws", 6, 5)
    v = params.new("v", 6)
    keys_data = [np.linspace(-1, 1, 4) * (i + 1) for i in range(3)]

    def loss_fn():
        keys = [T.const(k) for k in keys_data]
        _, context = soft_attention(keys, T.const(np.full(5, 0.3)), wb, ws, v)
        return T.dot(context, context)

    worst, _ = check_gradients(loss_fn, params)
    assert worst < 1e-4


def test_masked_log_softmax_gradients_and_support():
    params = ParamStore(seed=4)
    w = params.new("w", 7, 3)
    mask = np.array([True, False, True, True, False, True, True])

    def loss_fn():
        logits = T.matvec(w, T.const(np.array([0.3, -0.7, 1.1])))
        logp = T.masked_log_softmax(logits, mask)
        return T.neg(T.pick(logp, 2))

    logits = T.matvec(w, T.const(np.array([0.3, -0.7, 1.1])))
    logp = T.masked_log_softmax(logits, mask)
    probs = np.exp(logp.data)
    assert np.allclose(probs[~mask], 0.0)
    assert abs(probs[mask].sum() - 1.0) < 1e-9
    worst, _ = check_gradients(loss_fn, params)
    assert worst < 1e-4


def test_dropout_identities():
    rng = np.random.default_rng(11)
    x = T.const(np.ones(50))
    assert T.dropout(x, 0.0, rng, train=True) is x
    assert T.dropout(x, 0.5, rng, train=False) is x
    dropped = T.dropout(x, 0.5, rng, train=True)
    assert not np.allclose(dropped.data, x.data)


def test_sgd_without_momentum_is_plain_descent():
    params = ParamStore(seed=0)
    p = params.new("p", 2)
    p.data = np.array([1.0, -2.0])
    p.grad = np.array([0.5, 0.5])
    opt = MomentumSGD(params, lr=0.1, momentum=0.0, clip_norm=0.0)
    opt.step()
    assert np.allclose(p.data, [0.95, -2.05])


def test_sgd_two_steps_constant_gradient():
    params = ParamStore(seed=0)
    p = params.new("p", 1)
    p.data = np.zeros(1)
    opt = MomentumSGD(params, lr=0.1, momentum=0.9, clip_norm=0.0)
    for _ in range(2):
        p.grad = np.ones(1)
        opt.step()
    # v1 = -lr g, v2 = mu v1 - lr g; total displacement -lr g (2 + mu)
    assert np.allclose(p.data, -0.1 * (2 + 0.9))


def test_sgd_descends_quadratic():
    params = ParamStore(seed=0)
    p = params.new("p", 2)
    p.data = np.array([3.0, -4.0])
    opt = MomentumSGD(params, lr=0.002, momentum=0.9, clip_norm=0.0)
    last = float(np.sum(p.data ** 2))
    for _ in range(60):
        params.zero_grad()
        p.grad = 2 * p.data
        opt.step()
        now = float(np.sum(p.data ** 2))
        assert now < last
        last = now
    assert last < 0.1


def test_checkpoint_round_trip_and_determinism(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1.5])}
    meta = {"hidden": 5, "domains": ["bistro"]}
    p1, p2 = tmp_path / "m1.ckpt", tmp_path / "m2.ckpt"
    save_checkpoint(p1, arrays, meta)
    save_checkpoint(p2, arrays, meta)
    assert p1.read_bytes() == p2.read_bytes()
    meta2, arrays2 = load_checkpoint(p1)
    assert meta2 == meta
    assert set(arrays2) == {"a", "b"}
    assert np.array_equal(arrays2["a"], arrays["a"])
