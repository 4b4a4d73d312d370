import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from acorn.nn import (MLP, Adam, Conv1d, Dense, MaskedSoftmax, NodeNet, ProtocolError, ReLU,
                      clip_grad_norm, load_checkpoint, log_softmax, masked_softmax,
                      optimizer_step, sample_categorical, save_checkpoint)

import gradcheck


@pytest.mark.parametrize("name", ["dense", "conv1d_w1", "conv1d_w3", "relu", "masked_softmax",
                                  "pi1", "critic1", "pi2", "critic2"])
def test_gradient_check(name):
    rng = np.random.default_rng(0)
    loss, grads, params, x = gradcheck.layer_cases(rng)[name]
    err = gradcheck.check_params(loss, grads, params)
    if x is not None and grads.dx is not None:
        err = max(err, gradcheck.check_input(loss, x, grads.dx))
    assert err < 1e-4


def test_quadratic_gradient():
    d = Dense(1, 1, np.random.default_rng(0))
    d.params["W"][:] = 3.0
    x = np.ones((1, 1))
    y = d.forward(x)
    d.backward(2 * y)  # d/dw of (w*1)^2
    assert d.grads["W"][0, 0] == pytest.approx(6.0)


def test_backward_without_forward():
    for layer in (Dense(2, 2, np.random.default_rng(0)), ReLU(), MaskedSoftmax(),
                  Conv1d(2, 2, 1, np.random.default_rng(0))):
        with pytest.raises(ProtocolError):
            layer.backward(np.zeros((1, 2)))


def test_zero_dense_softmax_is_uniform():
    d = Dense(3, 4, np.random.default_rng(0))
    d.params["W"][:] = 0
    p = masked_softmax(d.forward(np.zeros((1, 3))))
    assert np.allclose(p, 0.25)


def test_single_valid_entry_gets_all_mass():
    p = masked_softmax(np.array([5.0, -2.0, 100.0]), np.array([False, True, False]))
    assert p.tolist() == [0.0, 1.0, 0.0]


def test_all_masked_rejected():
    with pytest.raises(ValueError):
        masked_softmax(np.zeros(3), np.zeros(3, dtype=bool))


def test_mask_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        masked_softmax(np.zeros(3), np.ones(4, dtype=bool))


def test_dense_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        Dense(3, 2, np.random.default_rng(0)).forward(np.zeros((1, 4)))


def test_averaging_conv_on_constant_input():
    conv = Conv1d(1, 1, 3, np.random.default_rng(0))
    conv.params["W"][:] = 1.0 / 3.0
    y = conv.forward(np.full((1, 6, 1), 2.0))[0, :, 0]
    # interior windows see three 2s; the zero-padded edges see two
    assert np.allclose(y[1:-1], 2.0)
    assert np.allclose(y[[0, -1]], 4.0 / 3.0)


def test_masked_logits_get_zero_gradient():
    sm = MaskedSoftmax()
    mask = np.array([True, False, True, False])
    sm.forward(np.array([0.3, 1.0, -0.2, 2.0]), mask)
    g = sm.backward(np.array([1.0, 2.0, 3.0, 4.0]))
    assert g[1] == 0.0 and g[3] == 0.0


logits = hnp.arrays(np.float64, st.integers(2, 12), elements=st.floats(-50, 50))


@given(logits, st.data())
def test_masked_softmax_sums_to_one(z, data):
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=z.size, max_size=z.size)))
    if not mask.any():
        mask[0] = True
    p = masked_softmax(z, mask)
    assert np.all(p[~mask] == 0.0)
    assert p[mask].sum() == pytest.approx(1.0)
    lp = log_softmax(z, mask)
    assert np.allclose(np.exp(lp[mask]), p[mask])


def test_masked_nodes_never_sampled():
    rng = np.random.default_rng(0)
    mask = rng.random(50) < 0.5
    p = masked_softmax(rng.normal(size=50) * 3, mask)
    draws = np.array([sample_categorical(p, rng) for _ in range(100_000)])
    assert mask[draws].all()


@given(st.integers(0, 2**31 - 1))
def test_finite_outputs_for_bounded_params(seed):
    rng = np.random.default_rng(seed)
    net = NodeNet(5, 4, rng, channels=(6, 4), trunk=8, kernel=3)
    for _, arr in net.named_params():
        arr[...] = rng.uniform(-10, 10, size=arr.shape)
    out = net.forward(rng.uniform(-10, 10, (2, 9, 5)), rng.uniform(0, 1, (2, 4)), record=False)
    assert np.isfinite(out).all()
    mlp = MLP([5, 8, 4], rng)
    for _, arr in mlp.named_params():
        arr[...] = rng.uniform(-10, 10, size=arr.shape)
    z = mlp.forward(rng.uniform(-10, 10, (3, 5)), record=False)
    assert np.isfinite(masked_softmax(z)).all()


def test_adam_zero_gradient_leaves_params():
    w = np.array([1.0, -2.0])
    optimizer_step([w], [np.zeros(2)], lr=0.1)
    assert w.tolist() == [1.0, -2.0]


def test_adam_first_step_closed_form():
    w = np.zeros(1)
    optimizer_step([w], [np.ones(1)], lr=0.1)
    # m_hat = v_hat = 1 after bias correction, so the step is lr / (1 + eps)
    assert w[0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)


def test_adam_runs_are_identical():
    def run():
        w = np.array([0.5, 0.5])
        st_ = None
        for i in range(20):
            st_ = optimizer_step([w], [np.array([np.sin(i), w[0] - w[1]])], st_, lr=0.05)
        return w
    assert np.array_equal(run(), run())


def test_clip_grad_norm():
    g = [np.array([3.0]), np.array([4.0])]
    assert clip_grad_norm(g, 1.0) == pytest.approx(5.0)
    assert np.sqrt(g[0] ** 2 + g[1] ** 2)[0] == pytest.approx(1.0)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    net = NodeNet(5, 4, rng)
    save_checkpoint(tmp_path / "ck", net.state_dict(), {"step": 3})
    tensors, meta = load_checkpoint(tmp_path / "ck")
    assert meta == {"step": 3}
    other = NodeNet(5, 4, np.random.default_rng(1))
    other.load_state_dict(tensors)
    for (_, a), (_, b) in zip(net.named_params(), other.named_params()):
        assert np.array_equal(a, b)
    raw = (tmp_path / "ck.bin").read_bytes()
    (tmp_path / "ck.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "ck")


def test_nodenet_handles_any_node_count():
    net = NodeNet(5, 4, np.random.default_rng(0))
    for n in (1, 17, 300):
        assert net.forward(np.zeros((1, n, 5)), np.zeros((1, 4)), record=False).shape == (1, n)


def test_adam_class_matches_functional():
    a, b = np.ones(3), np.ones(3)
    opt = Adam([a], lr=0.01)
    st_ = None
    for i in range(5):
        g = np.full(3, float(i))
        opt.step([g])
        st_ = optimizer_step([b], [g], st_, lr=0.01)
    assert np.array_equal(a, b)
