import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmdistill import nn
from swarmdistill.errors import CheckpointNotFound, LengthMismatch

from oracles import finite_difference, max_rel_error


def zero_params(obs=3, inflow=2, P=4, comm=2, hidden=(5,)):
    p = nn.init_params(obs, inflow, P, comm, hidden)
    for a in p.arrays():
        a[...] = 0.0
    return p


def test_zero_params_uniform_output():
    p = zero_params()
    logits, comm_out, _ = nn.forward(np.ones(3), np.ones(2), p)
    assert (logits == 0).all() and (comm_out == 0).all()
    assert np.allclose(nn.softmax(logits), 0.25)


def test_hand_computed_single_layer():
    # no hidden layer: output = x @ W + b
    p = nn.PolicyParams(1, 1, 1, 1, (), [np.array([[1.0, 2.0], [0.0, -1.0]])],
                        [np.array([0.5, 0.0])])
    logits, comm_out, _ = nn.forward(np.array([3.0]), np.array([4.0]), p)
    assert logits.tolist() == [3.5]
    assert comm_out.tolist() == [2.0]


def test_hand_computed_hidden_layer():
    w1 = np.array([[1.0, 0.0], [0.0, 1.0]])
    w2 = np.array([[2.0], [-1.0]])
    p = nn.PolicyParams(1, 1, 1, 0, (2,), [w1, w2], [np.zeros(2), np.array([0.1])])
    logits, _, _ = nn.forward(np.array([0.5]), np.array([-0.25]), p)
    assert logits[0] == pytest.approx(2 * math.tanh(0.5) - math.tanh(-0.25) + 0.1)


def test_forward_deterministic_bitwise():
    p = nn.init_params(9, 25, 9, 225, (32, 32), seed=4)
    x, c = np.random.default_rng(0).normal(size=(7, 9)), np.ones((7, 25))
    a = nn.forward(x, c, p)
    b = nn.forward(x, c, p)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_forward_length_check():
    p = zero_params()
    with pytest.raises(LengthMismatch):
        nn.forward(np.ones(4), np.ones(2), p)


def test_softmax_cases():
    assert np.allclose(nn.softmax(np.full(9, 3.3)), 1 / 9)
    q = nn.softmax(np.array([0.0, 1000.0, 0.0]))
    assert q[1] == pytest.approx(1.0) and q.sum() == pytest.approx(1.0)
    z = math.exp(-1) + 1 + math.exp(1)
    assert nn.softmax(np.array([-1.0, 0.0, 1.0])) == pytest.approx(
        [math.exp(-1) / z, 1 / z, math.exp(1) / z], rel=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=12), st.floats(-100, 100))
def test_softmax_shift_invariance(logits, c):
    z = np.array(logits)
    assert np.allclose(nn.softmax(z + c), nn.softmax(z), atol=1e-12)


def test_cross_entropy_cases():
    assert nn.cross_entropy(np.array([0.0, 1000.0, 0.0]), 1) == pytest.approx(0.0, abs=1e-12)
    assert nn.cross_entropy(np.zeros(9), 4) == pytest.approx(math.log(9))
    assert nn.cross_entropy(np.zeros(9), 4) == pytest.approx(2.1972, abs=1e-4)
    big = nn.cross_entropy(np.array([0.0, 5000.0]), 0)
    assert math.isfinite(big)
    assert big == pytest.approx(-math.log(np.finfo(float).tiny))


def test_cross_entropy_probs_matches_logits():
    z = np.array([0.3, -1.0, 2.0])
    q_star = np.array([0.0, 0.0, 1.0])
    assert nn.cross_entropy_probs(nn.softmax(z), q_star) == pytest.approx(nn.cross_entropy(z, 2))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=2, max_size=9), st.integers(0, 8))
def test_cross_entropy_nonnegative(logits, k):
    z = np.array(logits)
    k = k % len(z)
    assert nn.cross_entropy(z, k) >= 0.0


def test_cross_entropy_grad_fd():
    z = np.random.default_rng(0).normal(size=(4, 6))
    t = np.array([0, 5, 2, 2])
    g = nn.cross_entropy_grad(z, t)
    fd = finite_difference(lambda: float(nn.cross_entropy(z, t).sum()), [z])[0]
    assert max_rel_error([g], [fd]) < 1e-7


def random_case(rng, activation="tanh"):
    obs_dim = int(rng.integers(1, 6))
    inflow_dim = int(rng.integers(0, 5))
    P = int(rng.integers(2, 5))
    comm = int(rng.integers(0, 4))
    depth = int(rng.integers(1, 3))
    hidden = tuple(int(rng.integers(1, 9)) for _ in range(depth))
    p = nn.init_params(obs_dim, inflow_dim, P, comm, hidden, activation, seed=int(rng.integers(1 << 30)))
    for b in p.biases:
        b[...] = rng.normal(scale=0.3, size=b.shape)
    B = int(rng.integers(1, 4))
    x = rng.normal(size=(B, obs_dim))
    c = rng.normal(size=(B, inflow_dim))
    t = rng.integers(0, P, size=B)
    v = rng.normal(size=(B, comm))
    return p, x, c, t, v


def loss_of(p, x, c, t, v):
    logits, out, _ = nn.forward(x, c, p)
    return float(nn.cross_entropy(logits, t).sum() + (out * v).sum())


def test_gradient_check_random_configs():
    rng = np.random.default_rng(11)
    for _ in range(25):
        p, x, c, t, v = random_case(rng)
        logits, out, rec = nn.forward(x, c, p)
        grads = p.zeros_like()
        dx, dc = nn.backward(rec, nn.cross_entropy_grad(logits, t), v, p, grads)
        f = lambda: loss_of(p, x, c, t, v)
        assert max_rel_error(grads, finite_difference(f, p.arrays())) < 1e-6
        assert max_rel_error([dx, dc], finite_difference(f, [x, c])) < 1e-6


def test_zero_upstream_zero_gradient():
    p, x, c, t, v = random_case(np.random.default_rng(2))
    logits, out, rec = nn.forward(x, c, p)
    grads = p.zeros_like()
    dx, dc = nn.backward(rec, np.zeros_like(logits), np.zeros_like(out), p, grads)
    assert all((g == 0).all() for g in grads)
    assert (dx == 0).all() and (dc == 0).all()


def test_accumulation_is_additive():
    rng = np.random.default_rng(3)
    p, x, c, t, v = random_case(rng)
    x2, c2 = rng.normal(size=x.shape), rng.normal(size=c.shape)
    both = p.zeros_like()
    parts = []
    for xi, ci in ((x, c), (x2, c2)):
        logits, out, rec = nn.forward(xi, ci, p)
        g = p.zeros_like()
        nn.backward(rec, nn.cross_entropy_grad(logits, t), v, p, g)
        nn.backward(rec, nn.cross_entropy_grad(logits, t), v, p, both)
        parts.append(g)
    for s, a, b in zip(both, *parts):
        assert np.allclose(s, a + b, rtol=1e-13, atol=1e-15)


def test_relu_gradient_check():
    rng = np.random.default_rng(5)
    p, x, c, t, v = random_case(rng, "relu")
    logits, out, rec = nn.forward(x, c, p)
    grads = p.zeros_like()
    nn.backward(rec, nn.cross_entropy_grad(logits, t), v, p, grads)
    fd = finite_difference(lambda: loss_of(p, x, c, t, v), p.arrays())
    assert max_rel_error(grads, fd) < 1e-6


def test_adam_zero_grad_keeps_params():
    p = nn.init_params(3, 0, 2, 0, (4,), seed=1)
    before = [a.copy() for a in p.arrays()]
    st_ = nn.AdamState.for_params(p)
    nn.adam_step(p, p.zeros_like(), st_)
    assert all(np.array_equal(a, b) for a, b in zip(before, p.arrays()))
    assert all(m.shape == a.shape for m, a in zip(st_.m, p.arrays()))


def test_adam_scalar_step():
    p = nn.PolicyParams(1, 0, 1, 0, (), [np.array([[1.0]])], [np.array([0.0])])
    st_ = nn.AdamState.for_params(p, lr=1e-3)
    g = [np.array([[0.5]]), np.array([0.0])]
    nn.adam_step(p, g, st_)
    m = 0.1 * 0.5
    v = 0.001 * 0.25
    m_hat = m / (1 - 0.9)
    v_hat = v / (1 - 0.999)
    assert p.weights[0][0, 0] == pytest.approx(1.0 - 1e-3 * m_hat / (math.sqrt(v_hat) + 1e-8), rel=1e-15)
    assert st_.t == 1


def test_clip_grad_norm():
    g = [np.array([3.0]), np.array([4.0])]
    assert nn.clip_grad_norm(g, 1.0) == pytest.approx(5.0)
    assert math.hypot(g[0][0], g[1][0]) == pytest.approx(1.0)


def test_checkpoint_roundtrip_exact(tmp_path):
    p = nn.init_params(9, 25, 9, 225, (32, 32), seed=3)
    p.weights[0][0, 0] = 0.1 + 0.2  # value with a long repr
    st_ = nn.AdamState.for_params(p)
    nn.adam_step(p, [np.random.default_rng(0).normal(size=a.shape) for a in p.arrays()], st_)
    path = tmp_path / "ck.json"
    nn.save_checkpoint(path, p, "rendezvous", {"train": {"comm_size": 25}}, st_)
    q, task, cfg, st2 = nn.load_checkpoint(path)
    assert task == "rendezvous" and cfg["train"]["comm_size"] == 25
    for a, b in zip(p.arrays(), q.arrays()):
        assert a.tobytes() == b.tobytes()
    for a, b in zip(st_.v, st2.v):
        assert a.tobytes() == b.tobytes()
    assert st2.t == 1


def test_checkpoint_missing(tmp_path):
    with pytest.raises(CheckpointNotFound):
        nn.load_checkpoint(tmp_path / "nope.json")
