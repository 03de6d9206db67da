import math

import numpy as np
import pytest

from radfollow.nn import (
    AdamConfig,
    ParamSet,
    adam_step,
    attention_pool,
    attention_pool_backward,
    bidi_encode,
    bidi_encode_backward,
    dense_backward,
    dense_forward,
    dropout,
    dropout_backward,
    gru_step,
    gru_step_backward,
    init_attention,
    init_bidi,
    lstm_step,
    lstm_step_backward,
    softmax,
    softmax_xent,
    tensors_from_json,
    tensors_to_json,
)
from radfollow.nn.gradcheck import check_arrays

TOL = 1e-4
SEEDS = range(10)


def _cell(rng, D, H, gates):
    return (
        rng.normal(0, 0.5, (D, gates * H)),
        rng.normal(0, 0.5, (H, gates * H)),
        rng.normal(0, 0.1, gates * H),
    )


# -- GRU ----------------------------------------------------------------------

def test_gru_zero_params_halves_state():
    D, H = 3, 4
    Wx, Wh, b = np.zeros((D, 3 * H)), np.zeros((H, 3 * H)), np.zeros(3 * H)
    h_prev = np.array([[1.0, -2.0, 0.5, 3.0]])
    h, _ = gru_step(np.ones((1, D)), h_prev, Wx, Wh, b)
    np.testing.assert_allclose(h, 0.5 * h_prev)


def test_gru_zero_everything_gives_zero():
    D, H = 3, 4
    h, _ = gru_step(np.zeros((1, D)), np.zeros((1, H)), np.zeros((D, 3 * H)), np.zeros((H, 3 * H)), np.zeros(3 * H))
    assert np.all(h == 0)


def test_gru_dimension_mismatch():
    with pytest.raises(ValueError):
        gru_step(np.zeros((1, 2)), np.zeros((1, 4)), np.zeros((3, 12)), np.zeros((4, 12)), np.zeros(12))


@pytest.mark.parametrize("seed", SEEDS)
def test_gru_step_gradients(seed):
    rng = np.random.default_rng(seed)
    B, D, H = 2, 3, 4
    Wx, Wh, b = _cell(rng, D, H, 3)
    x = rng.normal(size=(B, D))
    h0 = rng.normal(size=(B, H))
    mask = np.array([1.0, 0.0]) if seed % 2 else None
    proj = rng.normal(size=(B, H))

    def loss():
        h, _ = gru_step(x, h0, Wx, Wh, b, mask)
        return float((h * proj).sum())

    h, cache = gru_step(x, h0, Wx, Wh, b, mask)
    gWx, gWh, gb = np.zeros_like(Wx), np.zeros_like(Wh), np.zeros_like(b)
    dx, dh0 = gru_step_backward(proj, cache, Wx, Wh, gWx, gWh, gb)
    errs = check_arrays(loss, {"Wx": Wx, "Wh": Wh, "b": b, "x": x, "h0": h0},
                        {"Wx": gWx, "Wh": gWh, "b": gb, "x": dx, "h0": dh0})
    assert max(errs.values()) < TOL, errs


# -- LSTM ---------------------------------------------------------------------

def test_lstm_zero_params_zero_state():
    D, H = 3, 2
    h, c, _ = lstm_step(np.ones((1, D)), np.zeros((1, H)), np.zeros((1, H)),
                        np.zeros((D, 4 * H)), np.zeros((H, 4 * H)), np.zeros(4 * H))
    assert np.all(h == 0) and np.all(c == 0)


def test_lstm_large_forget_bias_keeps_cell():
    rng = np.random.default_rng(3)
    D, H = 3, 4
    Wx, Wh, b = _cell(rng, D, H, 4)
    b = b.copy()
    c_prev = rng.normal(size=(1, H))
    x, h_prev = rng.normal(size=(1, D)), rng.normal(size=(1, H))
    deviations = []
    for bias in (0.0, 2.0, 5.0, 10.0):
        b[H:2 * H] = bias
        b[:H] = -bias  # input gate closing as well
        _, c, _ = lstm_step(x, h_prev, c_prev, Wx, Wh, b)
        deviations.append(np.abs(c - c_prev).max())
    assert all(a >= b for a, b in zip(deviations, deviations[1:]))
    assert deviations[-1] < 1e-3


@pytest.mark.parametrize("seed", SEEDS)
def test_lstm_step_gradients(seed):
    rng = np.random.default_rng(100 + seed)
    B, D, H = 2, 3, 3
    Wx, Wh, b = _cell(rng, D, H, 4)
    x, h0, c0 = rng.normal(size=(B, D)), rng.normal(size=(B, H)), rng.normal(size=(B, H))
    mask = np.array([0.0, 1.0]) if seed % 2 else None
    ph, pc = rng.normal(size=(B, H)), rng.normal(size=(B, H))

    def loss():
        h, c, _ = lstm_step(x, h0, c0, Wx, Wh, b, mask)
        return float((h * ph).sum() + (c * pc).sum())

    _, _, cache = lstm_step(x, h0, c0, Wx, Wh, b, mask)
    gWx, gWh, gb = np.zeros_like(Wx), np.zeros_like(Wh), np.zeros_like(b)
    dx, dh0, dc0 = lstm_step_backward(ph, pc, cache, Wx, Wh, gWx, gWh, gb)
    errs = check_arrays(loss, {"Wx": Wx, "Wh": Wh, "b": b, "x": x, "h0": h0, "c0": c0},
                        {"Wx": gWx, "Wh": gWh, "b": gb, "x": dx, "h0": dh0, "c0": dc0})
    assert max(errs.values()) < TOL, errs


# -- bidirectional ------------------------------------------------------------

def _bidi_params(kind, D, H, seed):
    ps = ParamSet()
    init_bidi(ps, "enc.", kind, D, H, np.random.default_rng(seed))
    for name in ps.names():
        if name.endswith("b"):
            ps.params[name][...] = np.random.default_rng(seed + 1).normal(0, 0.1, ps[name].shape)
    return ps


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_bidi_length_one_sees_same_element(kind):
    ps = _bidi_params(kind, 3, 4, 0)
    for n in ps.names():
        if n.startswith("enc.b."):
            ps.params[n][...] = ps.params["enc.f." + n[len("enc.b."):]]
    x = np.random.default_rng(1).normal(size=(1, 1, 3))
    out, _ = bidi_encode(kind, x, None, ps.params, "enc.")
    assert out.shape == (1, 1, 8)
    np.testing.assert_allclose(out[0, 0, :4], out[0, 0, 4:])


@pytest.mark.parametrize("kind", ["gru", "lstm"])
def test_bidi_palindrome_tied_weights(kind):
    ps = _bidi_params(kind, 2, 3, 4)
    for n in ps.names():
        if n.startswith("enc.b."):
            ps.params[n][...] = ps.params["enc.f." + n[len("enc.b."):]]
    rng = np.random.default_rng(5)
    a, b, c = rng.normal(size=(3, 2))
    x = np.stack([a, b, c, b, a])[None]
    out, _ = bidi_encode(kind, x, None, ps.params, "enc.")
    H = 3
    swapped = np.concatenate([out[..., H:], out[..., :H]], axis=-1)[:, ::-1]
    np.testing.assert_allclose(out, swapped, atol=1e-12)


def test_bidi_empty_sequence_rejected():
    ps = _bidi_params("gru", 2, 3, 0)
    with pytest.raises(ValueError):
        bidi_encode("gru", np.zeros((1, 0, 2)), None, ps.params, "enc.")


def test_masked_padding_matches_unpadded():
    ps = _bidi_params("lstm", 2, 3, 7)
    rng = np.random.default_rng(8)
    x = rng.normal(size=(1, 4, 2))
    ref, _ = bidi_encode("lstm", x, None, ps.params, "enc.")
    padded = np.concatenate([x, rng.normal(size=(1, 3, 2))], axis=1)
    mask = np.array([[1, 1, 1, 1, 0, 0, 0]], dtype=float)
    out, _ = bidi_encode("lstm", padded, mask, ps.params, "enc.")
    np.testing.assert_allclose(out[:, :4], ref, atol=1e-12)


@pytest.mark.parametrize("kind", ["gru", "lstm"])
@pytest.mark.parametrize("seed", SEEDS)
def test_bidi_gradients(kind, seed):
    rng = np.random.default_rng(200 + seed)
    B, T, D, H = 2, 4, 3, 2
    ps = _bidi_params(kind, D, H, seed)
    x = rng.normal(size=(B, T, D))
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=float)
    proj = rng.normal(size=(B, T, 2 * H)) * mask[:, :, None]

    def loss():
        out, _ = bidi_encode(kind, x, mask, ps.params, "enc.")
        return float((out * proj).sum())

    out, cache = bidi_encode(kind, x, mask, ps.params, "enc.")
    ps.zero_grad()
    dx = bidi_encode_backward(proj, cache, ps.params, ps.grads)
    arrays = dict(ps.params, x=x)
    analytic = dict(ps.grads, x=dx)
    errs = check_arrays(loss, arrays, analytic)
    assert max(errs.values()) < TOL, errs


# -- attention ----------------------------------------------------------------

def _attn(seed, K=4, A=3):
    ps = ParamSet()
    init_attention(ps, "att.", K, A, np.random.default_rng(seed))
    ps.params["att.b"][...] = np.random.default_rng(seed + 9).normal(0, 0.2, A)
    return ps


def test_attention_identical_rows_uniform():
    ps = _attn(0)
    H = np.tile(np.random.default_rng(1).normal(size=4), (1, 5, 1))
    pooled, alpha, _ = attention_pool(H, None, ps["att.W"], ps["att.b"], ps["att.ctx"])
    np.testing.assert_allclose(alpha, np.full((1, 5), 0.2))
    np.testing.assert_allclose(pooled[0], H[0, 0])


def test_attention_single_step():
    ps = _attn(2)
    H = np.random.default_rng(3).normal(size=(1, 1, 4))
    pooled, alpha, _ = attention_pool(H, None, ps["att.W"], ps["att.b"], ps["att.ctx"])
    assert alpha.tolist() == [[1.0]]
    np.testing.assert_allclose(pooled, H[:, 0])


def test_attention_weights_positive_and_normalised():
    ps = _attn(4)
    H = np.random.default_rng(5).normal(size=(3, 6, 4))
    mask = np.ones((3, 6))
    mask[1, 4:] = 0
    _, alpha, _ = attention_pool(H, mask, ps["att.W"], ps["att.b"], ps["att.ctx"])
    assert np.all(np.abs(alpha.sum(axis=1) - 1) < 1e-12)
    assert np.all(alpha[mask > 0] > 0)
    assert np.all(alpha[mask == 0] == 0)


def test_attention_empty_rejected():
    ps = _attn(0)
    with pytest.raises(ValueError):
        attention_pool(np.zeros((1, 0, 4)), None, ps["att.W"], ps["att.b"], ps["att.ctx"])


@pytest.mark.parametrize("seed", SEEDS)
def test_attention_gradients(seed):
    rng = np.random.default_rng(300 + seed)
    ps = _attn(seed)
    H = rng.normal(size=(2, 5, 4))
    mask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], dtype=float)
    proj = rng.normal(size=(2, 4))

    def loss():
        pooled, _, _ = attention_pool(H, mask, ps["att.W"], ps["att.b"], ps["att.ctx"])
        return float((pooled * proj).sum())

    _, _, cache = attention_pool(H, mask, ps["att.W"], ps["att.b"], ps["att.ctx"])
    ps.zero_grad()
    dH = attention_pool_backward(proj, cache, ps["att.W"], ps["att.ctx"], ps.grads, "att.")
    errs = check_arrays(loss, dict(ps.params, H=H), dict(ps.grads, H=dH))
    assert max(errs.values()) < TOL, errs


# -- losses -------------------------------------------------------------------

def test_xent_uniform_logits_is_log_k():
    for K in (2, 3, 13):
        loss, _ = softmax_xent(np.zeros((1, K)), np.array([1]))
        assert loss == pytest.approx(math.log(K), abs=1e-12)


def test_xent_dominant_logit_vanishes():
    logits = np.array([[20.0, 0.0, 0.0]])
    loss, _ = softmax_xent(logits, np.array([0]))
    assert loss < 1e-3


def test_softmax_sums_to_one():
    x = np.random.default_rng(0).normal(0, 30, size=(50, 13))
    assert np.all(np.abs(softmax(x).sum(axis=1) - 1) < 1e-12)


@pytest.mark.parametrize("seed", SEEDS)
def test_xent_gradients(seed):
    rng = np.random.default_rng(400 + seed)
    logits = rng.normal(size=(2, 3, 4))
    targets = rng.integers(0, 4, size=(2, 3))
    weights = rng.uniform(0.5, 2.0, size=4)
    mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=float)

    def loss():
        return softmax_xent(logits, targets, weights, mask)[0]

    _, grad = softmax_xent(logits, targets, weights, mask)
    errs = check_arrays(loss, {"logits": logits}, {"logits": grad})
    assert errs["logits"] < TOL


# -- dense and dropout --------------------------------------------------------

@pytest.mark.parametrize("seed", SEEDS)
def test_dense_gradients(seed):
    rng = np.random.default_rng(500 + seed)
    x = rng.normal(size=(2, 3, 4))
    p = {"d.W": rng.normal(size=(4, 5)), "d.b": rng.normal(size=5)}
    g = {k: np.zeros_like(v) for k, v in p.items()}
    r = rng.normal(size=(2, 3, 5))

    def loss():
        return float((dense_forward(x, p["d.W"], p["d.b"])[0] * r).sum())

    _, cache = dense_forward(x, p["d.W"], p["d.b"])
    dx = dense_backward(r, cache, p["d.W"], g, "d.")
    errs = check_arrays(loss, {**p, "x": x}, {**g, "x": dx})
    assert max(errs.values()) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_dropout_gradients(seed):
    rng = np.random.default_rng(600 + seed)
    x = rng.normal(size=(3, 4))
    r = rng.normal(size=(3, 4))

    def loss():
        return float((dropout(x, 0.5, True, np.random.default_rng(seed))[0] * r).sum())

    _, mask = dropout(x, 0.5, True, np.random.default_rng(seed))
    errs = check_arrays(loss, {"x": x}, {"x": dropout_backward(r, mask)})
    assert errs["x"] < TOL


def test_dropout_identity_cases():
    x = np.arange(10.0)
    rng = np.random.default_rng(0)
    assert dropout(x, 0.0, True, rng)[0] is x
    assert dropout(x, 0.7, False, rng)[0] is x


def test_dropout_rate_one_rejected():
    with pytest.raises(ValueError):
        dropout(np.ones(3), 1.0, True, np.random.default_rng(0))


def test_dropout_zero_fraction():
    y, mask = dropout(np.ones(100_000), 0.4, True, np.random.default_rng(42))
    assert abs((y == 0).mean() - 0.4) < 0.03
    kept = y[y != 0]
    np.testing.assert_allclose(kept, 1 / 0.6)
    np.testing.assert_allclose(dropout_backward(np.ones_like(y), mask), mask)


# -- Adam ---------------------------------------------------------------------

def _adam_state(p):
    return {k: np.zeros_like(v) for k, v in p.items()}, {k: np.zeros_like(v) for k, v in p.items()}


def test_adam_first_step_is_lr_sign():
    cfg = AdamConfig(lr=0.01)
    for g in (3.0, -0.2, 1e-3):
        p = {"w": np.array([1.0])}
        adam_step(p, {"w": np.array([g])}, _adam_state(p), cfg, 1)
        assert p["w"][0] == pytest.approx(1.0 - 0.01 * np.sign(g), rel=1e-6)


def test_adam_zero_grad_from_fresh_state():
    p = {"w": np.array([0.5, -1.0])}
    state = _adam_state(p)
    adam_step(p, {"w": np.zeros(2)}, state, AdamConfig(), 1)
    np.testing.assert_array_equal(p["w"], [0.5, -1.0])


def test_adam_zero_grad_decays_moments():
    p = {"w": np.array([0.5])}
    m, v = _adam_state(p)
    m["w"][0], v["w"][0] = 0.2, 0.04
    adam_step(p, {"w": np.zeros(1)}, (m, v), AdamConfig(), 2)
    assert m["w"][0] == pytest.approx(0.9 * 0.2)
    assert v["w"][0] == pytest.approx(0.999 * 0.04)


def test_adam_two_constant_steps_by_hand():
    lr, g = 0.1, 2.0
    p = {"w": np.array([0.0])}
    state = _adam_state(p)
    cfg = AdamConfig(lr=lr)
    adam_step(p, {"w": np.array([g])}, state, cfg, 1)
    adam_step(p, {"w": np.array([g])}, state, cfg, 2)
    # step 1: m=0.2, v=0.004 -> mhat=2, vhat=4 -> -0.1*2/(2+eps)
    # step 2: m=0.38, v=0.007996 -> mhat=0.38/0.19=2, vhat=0.007996/0.001999=4
    expected = -lr * 2 / (2 + 1e-8) - lr * 2 / (2 + 1e-8)
    assert p["w"][0] == pytest.approx(expected, rel=1e-12)
    assert state[0]["w"][0] == pytest.approx(0.38)
    assert state[1]["w"][0] == pytest.approx(0.007996)


def test_adam_rejects_step_zero():
    p = {"w": np.zeros(1)}
    with pytest.raises(ValueError):
        adam_step(p, {"w": np.zeros(1)}, _adam_state(p), AdamConfig(), 0)


# -- checkpoint ---------------------------------------------------------------

def test_checkpoint_round_trip_is_exact_and_stable():
    rng = np.random.default_rng(0)
    tensors = {"a.W": rng.normal(size=(3, 4)), "b": rng.normal(size=5), "s": np.array(1.5)}
    text = tensors_to_json(tensors)
    back = tensors_from_json(text)
    assert set(back) == set(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])
    assert tensors_to_json(back) == text


def test_checkpoint_rejects_foreign_format():
    with pytest.raises(ValueError):
        tensors_from_json('{"format": "other", "version": 1, "tensors": {}}')
