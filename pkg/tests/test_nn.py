import numpy as np
import pytest
from hypothesis import given, strategies as st

from driveclone import nn


def identity_net(dim):
    return nn.Mlp([nn.Layer(np.eye(dim), np.zeros(dim), "identity")])


def test_forward_identity_layer_passes_input_through(rng):
    x = rng.normal(size=4)
    out, _ = nn.forward(identity_net(4), x)
    assert np.array_equal(out, x)


def test_forward_zero_weights_yields_activated_bias():
    c = np.array([0.3, -1.2])
    net = nn.Mlp([nn.Layer(np.zeros((3, 2)), c, "tanh")])
    out, _ = nn.forward(net, np.ones(3))
    assert np.allclose(out, np.tanh(c))


def test_forward_random_net_finite_and_pure(rng):
    net = nn.init_mlp([14, 32, 2], rng)
    x = rng.normal(size=14)
    out1, _ = nn.forward(net, x)
    out2, _ = nn.forward(net, x)
    assert np.isfinite(out1).all()
    assert np.array_equal(out1, out2)


def test_forward_shape_mismatch():
    net = identity_net(3)
    with pytest.raises(nn.ShapeMismatch):
        nn.forward(net, np.zeros(4))


def test_backward_linear_net_matches_closed_form(rng):
    # single linear layer, loss = ||Wx - y||^2 -> dL/dx = 2 W^T (Wx - y)
    w = rng.normal(size=(3, 2))
    net = nn.Mlp([nn.Layer(w, np.zeros(2), "identity")])
    x = rng.normal(size=3)
    y = rng.normal(size=2)
    out, cache = nn.forward(net, x)
    grads, d_input = nn.backward(net, cache, 2.0 * (out - y))
    assert np.allclose(d_input, 2.0 * w @ (w.T @ x - y))
    assert np.allclose(grads[0], np.outer(x, 2.0 * (out - y)))


def test_backward_zero_grad_output_gives_zero_gradients(rng):
    net = nn.init_mlp([5, 8, 3], rng)
    x = rng.normal(size=5)
    _, cache = nn.forward(net, x)
    grads, d_input = nn.backward(net, cache, np.zeros(3))
    assert all(np.all(g == 0.0) for g in grads)
    assert np.all(d_input == 0.0)


@pytest.mark.parametrize("hidden_activation", ["tanh", "relu"])
def test_gradients_match_finite_differences(hidden_activation, rng):
    net = nn.init_mlp([6, 12, 3], rng, hidden_activation=hidden_activation)
    x = rng.normal(size=(5, 6))
    y = rng.normal(size=(5, 3))

    def loss_fn(params):
        current = nn.with_parameters(net, params)
        out, cache = nn.forward(current, x)
        diff = out - y
        loss = float(np.mean(diff * diff))
        grads, _ = nn.backward(current, cache, 2.0 * diff / diff.size)
        return loss, grads

    err = nn.grad_check(loss_fn, nn.parameters(net), eps=1e-5)
    assert err < 1e-4


def test_adam_zero_gradients_leave_parameters_unchanged(rng):
    params = [rng.normal(size=(3, 2)), rng.normal(size=2)]
    state = nn.adam_init(params, lr=0.1)
    new_params, new_state = nn.adam_step(params, [np.zeros((3, 2)), np.zeros(2)], state)
    assert all(np.array_equal(a, b) for a, b in zip(params, new_params))
    assert new_state.step == 1


def test_adam_first_step_moves_by_lr_times_sign():
    params = [np.zeros(3)]
    g = np.array([0.5, -2.0, 1e-3])
    state = nn.adam_init(params, lr=0.01)
    new_params, _ = nn.adam_step(params, [g], state)
    assert np.allclose(new_params[0], -0.01 * np.sign(g), atol=1e-4)


def test_adam_converges_on_quadratic_bowl(rng):
    params = [rng.normal(size=6)]
    state = nn.adam_init(params, lr=0.05)
    initial = float(np.sum(params[0] ** 2))
    for _ in range(200):
        params, state = nn.adam_step(params, [2.0 * params[0]], state)
    assert float(np.sum(params[0] ** 2)) < initial


def test_adam_shape_mismatch():
    params = [np.zeros(3)]
    state = nn.adam_init(params)
    with pytest.raises(nn.ShapeMismatch):
        nn.adam_step(params, [np.zeros(4)], state)


def test_log_sum_exp_singleton_exact():
    assert nn.log_sum_exp([3.7]) == 3.7


def test_log_sum_exp_two_zeros():
    assert nn.log_sum_exp([0.0, 0.0]) == pytest.approx(np.log(2.0))


def test_log_sum_exp_large_values_do_not_overflow():
    assert nn.log_sum_exp([1000.0, 1000.0]) == pytest.approx(1000.0 + np.log(2.0))


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=20))
def test_log_sum_exp_bounds(values):
    lse = nn.log_sum_exp(values)
    assert lse >= max(values) - 1e-12
    assert lse <= max(values) + np.log(len(values)) + 1e-12


def test_checkpoint_round_trip_exact(rng, tmp_path):
    net = nn.init_mlp([4, 7, 2], rng)
    extra = rng.normal(size=2)
    path = tmp_path / "net.ckpt"
    header = {"kind": "test", "note": "hello"}
    nn.save_checkpoint(path, header, nn.mlp_to_arrays(net) + [("log_std", extra)])
    loaded_header, arrays = nn.load_checkpoint(path)
    assert loaded_header["kind"] == "test"
    restored = nn.mlp_from_arrays(arrays, [l.activation for l in net.layers])
    for a, b in zip(nn.parameters(net), nn.parameters(restored)):
        assert np.array_equal(a, b)
    assert np.array_equal(arrays["log_std"], extra)
    assert path.read_text().startswith(nn.CHECKPOINT_MAGIC)


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_text("not a checkpoint\n")
    with pytest.raises(ValueError):
        nn.load_checkpoint(path)
