"""Student-state updates: input gating, per-slot dynamics, aggregation."""

import numpy as np
import pytest

from ktrace import autodiff as ad
from ktrace.autodiff import Tensor
from ktrace.lstm import GATES
from ktrace.optim import ParamStore
from ktrace.tracer import (StateSnapshot, aggregate_state, combine_input,
                           initial_matrix_state, initial_vector_state,
                           init_tracer, step_eernn, step_ekt, tracer_gates)


def make_store(dh=2, dv=1, matrix=False, K=2, seed=0, per_slot=False):
    store = ParamStore()
    init_tracer(store, dh, dv, np.random.default_rng(seed),
                matrix_state=matrix, K=K, per_slot=per_slot)
    return store


class TestCombineInput:
    def test_correct_goes_first_half(self):
        out = combine_input(Tensor(np.array([0.2, -0.1])), 1)
        assert out.data.tolist() == [0.2, -0.1, 0.0, 0.0]

    def test_wrong_goes_second_half(self):
        out = combine_input(Tensor(np.array([0.2, -0.1])), 0)
        assert out.data.tolist() == [0.0, 0.0, 0.2, -0.1]

    def test_structural_identity_between_halves(self):
        x = Tensor(np.array([0.3, 0.7, -0.2, 0.5]))
        pos = combine_input(x, 1)
        neg = combine_input(x, 0)
        assert pos.data[:4].tolist() == neg.data[4:].tolist()

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError):
            combine_input(Tensor(np.zeros(2)), 2)


class TestVectorStep:
    def test_zero_weights_zero_state(self):
        store = make_store()
        for name, p in store.params.items():
            p.data[:] = 0.0
        gates = tracer_gates(store)
        snap = step_eernn(Tensor(np.zeros(4)), initial_vector_state(store["st.h0"]), gates)
        assert np.all(snap.h.data == 0.0)
        assert snap.step == 1

    def test_hand_unroll_dh1(self):
        rng = np.random.default_rng(4)
        store = make_store(dh=1, dv=1, seed=4)
        gates = tracer_gates(store)
        xt = rng.normal(size=4)
        snap = step_eernn(Tensor(xt), initial_vector_state(store["st.h0"]), gates)

        def sig(z):
            return 1.0 / (1.0 + np.exp(-z))

        h0 = store["st.h0"].data
        vals = {}
        for g in GATES:
            vals[g] = (store[f"st.Z_x{g}"].data @ xt
                       + store[f"st.Z_h{g}"].data @ h0 + store[f"st.b_{g}"].data)
        c = sig(vals["f"]) * 0.0 + sig(vals["i"]) * np.tanh(vals["c"])
        h = sig(vals["o"]) * np.tanh(c)
        assert np.allclose(snap.h.data, h, atol=1e-12)

    def test_long_constant_input_converges(self):
        store = make_store(dh=3, dv=1, seed=5)
        gates = tracer_gates(store)
        xt = Tensor(np.full(4, 0.3))
        snap = initial_vector_state(store["st.h0"])
        prev = snap.h.data.copy()
        delta = None
        with ad.no_grad():
            for _ in range(500):
                snap = step_eernn(xt, snap, gates)
                delta = np.abs(snap.h.data - prev).max()
                prev = snap.h.data.copy()
        assert delta < 1e-6
        assert np.all(np.abs(snap.h.data) < 1.0)

    def test_replay_is_bit_identical(self):
        store = make_store(seed=6)
        gates = tracer_gates(store)
        xs = np.random.default_rng(0).normal(size=(5, 4))

        def run():
            snap = initial_vector_state(store["st.h0"])
            for x in xs:
                snap = step_eernn(Tensor(x), snap, gates)
            return snap.h.data.tobytes()

        assert run() == run()


class TestMatrixStep:
    def test_one_hot_impact_isolates_input(self):
        # with zero biases, unselected slots evolve exactly as with a zero input
        store = make_store(dh=2, dv=1, matrix=True, K=3, seed=7)
        for g in GATES:
            store[f"st.b_{g}"].data[:] = 0.0
        gates = tracer_gates(store)
        H0 = store["st.H0"]
        prev = initial_matrix_state(H0)
        prev.H.data[:] = np.random.default_rng(1).normal(size=prev.H.shape) * 0.3
        beta = Tensor(np.array([0.0, 1.0, 0.0]))
        stepped = step_ekt(Tensor(np.ones(4)), beta, prev, gates)
        silent = step_ekt(Tensor(np.zeros(4)), Tensor(np.ones(3) / 3), prev, gates)
        assert np.allclose(stepped.H.data[0], silent.H.data[0], atol=1e-15)
        assert np.allclose(stepped.H.data[2], silent.H.data[2], atol=1e-15)
        assert not np.allclose(stepped.H.data[1], silent.H.data[1])

    def test_hand_unroll_per_slot_K2_dh1(self):
        rng = np.random.default_rng(8)
        store = make_store(dh=1, dv=1, matrix=True, K=2, seed=8)
        gates = tracer_gates(store)
        xt = rng.normal(size=4)
        beta = np.array([0.3, 0.7])
        prev = initial_matrix_state(store["st.H0"])
        snap = step_ekt(Tensor(xt), Tensor(beta), prev, gates)

        def sig(z):
            return 1.0 / (1.0 + np.exp(-z))

        for slot in range(2):
            h_prev = store["st.H0"].data[:, slot]
            x_slot = beta[slot] * xt
            vals = {}
            for g in GATES:
                vals[g] = (store[f"st.Z_x{g}"].data @ x_slot
                           + store[f"st.Z_h{g}"].data @ h_prev
                           + store[f"st.b_{g}"].data)
            c = sig(vals["i"]) * np.tanh(vals["c"])
            h = sig(vals["o"]) * np.tanh(c)
            assert np.allclose(snap.H.data[slot], h, atol=1e-12)

    def test_uniform_impact_keeps_equal_slots_equal(self):
        store = make_store(dh=2, dv=1, matrix=True, K=3, seed=9)
        store["st.H0"].data[:] = 0.25  # identical slots
        gates = tracer_gates(store)
        snap = step_ekt(Tensor(np.ones(4)), Tensor(np.ones(3) / 3),
                        initial_matrix_state(store["st.H0"]), gates)
        assert np.allclose(snap.H.data[0], snap.H.data[1], atol=1e-15)
        assert np.allclose(snap.H.data[1], snap.H.data[2], atol=1e-15)

    def test_non_distribution_rejected(self):
        store = make_store(matrix=True, K=2)
        gates = tracer_gates(store)
        prev = initial_matrix_state(store["st.H0"])
        with pytest.raises(ValueError):
            step_ekt(Tensor(np.zeros(4)), Tensor(np.array([0.7, 0.7])), prev, gates)

    def test_per_slot_weights_mode_runs(self):
        store = make_store(dh=2, dv=1, matrix=True, K=2, seed=10, per_slot=True)
        gates = tracer_gates(store, per_slot=True, K=2)
        snap = step_ekt(Tensor(np.ones(4)), Tensor(np.array([0.5, 0.5])),
                        initial_matrix_state(store["st.H0"]), gates)
        assert snap.H.shape == (2, 2)


class TestReduction:
    def test_ekt_with_one_slot_equals_eernn(self):
        store = make_store(dh=3, dv=1, matrix=True, K=1, seed=11)
        gates = tracer_gates(store)
        h0 = Tensor(store["st.H0"].data[:, 0].copy())
        xs = np.random.default_rng(2).normal(size=(4, 4))
        vec = StateSnapshot(step=0, h=h0, c=Tensor(np.zeros(3)))
        mat = initial_matrix_state(store["st.H0"])
        for x in xs:
            vec = step_eernn(Tensor(x), vec, gates)
            mat = step_ekt(Tensor(x), Tensor(np.array([1.0])), mat, gates)
            assert np.allclose(vec.h.data, mat.H.data[0], atol=1e-15)


class TestAggregate:
    def test_one_hot_selects_slot(self):
        H = Tensor(np.arange(6.0).reshape(3, 2))
        s = aggregate_state(H, Tensor(np.array([0.0, 1.0, 0.0])))
        assert np.allclose(s.data, H.data[1], atol=1e-15)

    def test_uniform_on_equal_slots(self):
        H = Tensor(np.tile([[1.5, -0.5]], (4, 1)))
        s = aggregate_state(H, Tensor(np.ones(4) / 4))
        assert np.allclose(s.data, [1.5, -0.5], atol=1e-15)

    def test_random_matches_bruteforce(self):
        rng = np.random.default_rng(3)
        H = rng.normal(size=(3, 5))
        beta = rng.dirichlet(np.ones(3))
        s = aggregate_state(Tensor(H), Tensor(beta))
        expected = sum(beta[i] * H[i] for i in range(3))
        assert np.allclose(s.data, expected, atol=1e-14)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            aggregate_state(Tensor(np.zeros((3, 2))), Tensor(np.zeros(4)))


class TestSplitWeightGradients:
    @pytest.mark.parametrize("r,zero_half", [(1, slice(2, 4)), (0, slice(0, 2))])
    def test_unused_half_gets_exact_zero_gradient(self, r, zero_half):
        store = make_store(dh=2, dv=1, seed=12, matrix=False)
        gates = tracer_gates(store)
        rng = np.random.default_rng(4)
        snap = initial_vector_state(store["st.h0"])
        for _ in range(2):  # two steps so the forget gate sees a nonzero cell
            snap = step_eernn(combine_input(Tensor(rng.normal(size=2)), r), snap, gates)
        store.zero_grad()
        ad.sum_(ad.mul(snap.h, snap.h)).backward()
        used_half = slice(2, 4) if r == 0 else slice(0, 2)
        for g in GATES:
            grad = store[f"st.Z_x{g}"].grad
            assert np.all(grad[:, zero_half] == 0.0)
            assert np.any(grad[:, used_half] != 0.0)
