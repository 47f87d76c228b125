import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from incrank.linalg import make_rng
from incrank.network import add_task_to_net, build_mlp
from incrank.optim import Adam, adam_init


def test_defaults_accepted_and_zero_moments():
    p = {"w": np.ones(3)}
    opt = adam_init(p)
    assert (opt.lr, opt.beta1, opt.beta2, opt.eps) == (1e-3, 0.9, 0.999, 1e-8)
    assert opt.step_count == 0
    assert not opt.m["w"].any() and not opt.v["w"].any()


@pytest.mark.parametrize("kw", [{"lr": 0.0}, {"beta1": 1.0}, {"beta2": -0.1}, {"eps": 0.0}])
def test_invalid_hyperparameters(kw):
    with pytest.raises(ValueError):
        Adam({"w": np.ones(1)}, **kw)


def test_first_step_hand_value():
    # t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
    p = {"w": np.array([0.0])}
    opt = Adam(p)
    opt.step(p, {"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
    assert p["w"][0] == pytest.approx(-9.99999990e-4, rel=1e-9)
    assert opt.step_count == 1


def test_zero_gradient_leaves_params():
    p = {"w": np.array([1.5, -2.0])}
    opt = Adam(p)
    for _ in range(10):
        opt.step(p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.5, -2.0])


def test_determinism():
    g = {"w": np.array([0.3, -0.2])}
    out = []
    for _ in range(2):
        p = {"w": np.array([1.0, 1.0])}
        Adam(p).step(p, g)
        out.append(p["w"].tobytes())
    assert out[0] == out[1]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False).filter(lambda v: v != 0), min_size=1, max_size=8))
def test_first_step_sign(gs):
    g = np.array(gs)
    p = {"w": np.zeros_like(g)}
    Adam(p).step(p, {"w": g})
    np.testing.assert_array_equal(np.sign(p["w"]), -np.sign(g))


def test_shape_and_finiteness_checks():
    p = {"w": np.zeros(2)}
    opt = Adam(p)
    with pytest.raises(ValueError):
        opt.step(p, {"w": np.zeros(3)})
    with pytest.raises(FloatingPointError, match="non-finite"):
        opt.step(p, {"w": np.array([np.nan, 0.0])})
    with pytest.raises(KeyError):
        opt.step(p, {"x": np.zeros(2)})


def test_frozen_parameter_rejected():
    rng = make_rng(0)
    net = build_mlp(4, [3], 1, rng)
    add_task_to_net(net, 2, 1, rng)
    add_task_to_net(net, 2, 1, rng)
    frozen = {"old_u": net.hidden_layers[0].factors[0].u}
    with pytest.raises(ValueError, match="frozen"):
        Adam(frozen)
    Adam(net.trainable())
