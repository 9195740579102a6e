"""Cell-level contracts, checked against straight-numpy hand evaluations."""

import numpy as np
import pytest

from ktrace import autodiff as ad
from ktrace.autodiff import Tensor
from ktrace.lstm import GATES, gates_from_tensors, lstm_cell


def make_gates(d, d_in, fill=None, rng=None):
    def mk(shape):
        if rng is not None:
            return Tensor(rng.normal(size=shape))
        return Tensor(np.full(shape, 0.0 if fill is None else fill))
    zx = [mk((d, d_in)) for _ in GATES]
    zh = [mk((d, d)) for _ in GATES]
    b = [mk((d,)) for _ in GATES]
    return zx, zh, b


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def test_zero_weights_zero_input_gives_zero_state():
    zx, zh, b = make_gates(3, 2)
    gates = gates_from_tensors(zx, zh, b)
    h, c = lstm_cell(Tensor(np.zeros(2)), Tensor(np.zeros(3)), Tensor(np.zeros(3)), gates)
    # i=f=o=0.5 and the candidate is tanh(0)=0, so c and h stay exactly 0
    assert np.all(h.data == 0.0) and np.all(c.data == 0.0)


def test_large_forget_bias_preserves_cell():
    zx, zh, b = make_gates(2, 2)
    b[1] = Tensor(np.full(2, 30.0))  # forget gate saturates at 1
    gates = gates_from_tensors(zx, zh, b)
    prev_c = Tensor(np.array([0.7, -0.3]))
    _, c = lstm_cell(Tensor(np.zeros(2)), Tensor(np.zeros(2)), prev_c, gates)
    assert np.allclose(c.data, prev_c.data, atol=1e-9)


def test_random_cell_matches_hand_evaluation():
    rng = np.random.default_rng(11)
    zx, zh, b = make_gates(2, 2, rng=rng)
    gates = gates_from_tensors(zx, zh, b)
    w = rng.normal(size=2)
    h_prev = rng.normal(size=2) * 0.5
    c_prev = rng.normal(size=2) * 0.5

    h, c = lstm_cell(Tensor(w), Tensor(h_prev), Tensor(c_prev), gates)

    # independent evaluation of the gate formulas, one gate at a time
    i = sigmoid(zx[0].data @ w + zh[0].data @ h_prev + b[0].data)
    f = sigmoid(zx[1].data @ w + zh[1].data @ h_prev + b[1].data)
    o = sigmoid(zx[2].data @ w + zh[2].data @ h_prev + b[2].data)
    cand = np.tanh(zx[3].data @ w + zh[3].data @ h_prev + b[3].data)
    c_ref = f * c_prev + i * cand
    h_ref = o * np.tanh(c_ref)
    assert np.allclose(c.data, c_ref, atol=1e-12)
    assert np.allclose(h.data, h_ref, atol=1e-12)


def test_state_bounded_by_tanh():
    rng = np.random.default_rng(12)
    zx, zh, b = make_gates(4, 3, rng=rng)
    gates = gates_from_tensors(zx, zh, b)
    h = Tensor(np.zeros(4))
    c = Tensor(np.zeros(4))
    for _ in range(50):
        h, c = lstm_cell(Tensor(rng.normal(size=3) * 3), h, c, gates)
    assert np.all(np.abs(h.data) < 1.0)


def test_shape_validation():
    zx, zh, b = make_gates(3, 2)
    zh[2] = Tensor(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        gates_from_tensors(zx, zh, b)
    gates = gates_from_tensors(*make_gates(3, 2))
    with pytest.raises(ValueError):
        lstm_cell(Tensor(np.zeros(5)), Tensor(np.zeros(3)), Tensor(np.zeros(3)), gates)


def test_cell_gradients_pass_finite_differences():
    rng = np.random.default_rng(13)
    zx, zh, b = make_gates(2, 3, rng=rng)
    for t in zx + zh + b:
        t.requires_grad = True
    params = {f"p{i}": t for i, t in enumerate(zx + zh + b)}
    w = Tensor(rng.normal(size=3))

    def f():
        gates = gates_from_tensors(zx, zh, b)
        h, c = lstm_cell(w, Tensor(np.zeros(2)), Tensor(np.zeros(2)), gates)
        h2, _ = lstm_cell(w, h, c, gates)
        return ad.sum_(ad.mul(h2, h2))

    assert ad.grad_check(f, params) < 1e-4
