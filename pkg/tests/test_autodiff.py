"""Core engine: op gradients vs central differences, softmax/cosine contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ktrace import autodiff as ad
from ktrace.autodiff import Tensor, grad_check, no_grad


def leaf(arr):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=True)


class TestBasics:
    def test_square_gradient_matches_analytic(self):
        x = leaf([3.0])
        err = grad_check(lambda: ad.sum_(ad.mul(x, x)), {"x": x})
        assert err < 1e-6
        x.grad = None
        ad.sum_(ad.mul(x, x)).backward()
        assert abs(x.grad[0] - 6.0) < 1e-12

    def test_backward_needs_scalar(self):
        x = leaf([1.0, 2.0])
        with pytest.raises(ValueError):
            (x * x).backward()

    def test_no_grad_blocks_graph(self):
        x = leaf([2.0])
        with no_grad():
            y = x * x
        assert y._backward is None and not y.requires_grad

    def test_values_are_float64(self):
        assert Tensor([1, 2]).data.dtype == np.float64

    @pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul, ad.div])
    def test_elementwise_broadcast_gradients(self, op):
        rng = np.random.default_rng(0)
        a = leaf(rng.normal(size=(3, 4)) + 2.0)
        b = leaf(rng.normal(size=(4,)) + 2.0)
        err = grad_check(lambda: ad.sum_(op(a, b)), [a, b])
        assert err < 1e-7

    def test_matmul_batched_gradient(self):
        rng = np.random.default_rng(1)
        a = leaf(rng.normal(size=(2, 3, 4)))
        b = leaf(rng.normal(size=(4, 5)))
        err = grad_check(lambda: ad.sum_(ad.matmul(a, b)), [a, b])
        assert err < 1e-7

    def test_matmul_rejects_vectors(self):
        with pytest.raises(ValueError):
            ad.matmul(leaf([1.0]), leaf([1.0]))

    @pytest.mark.parametrize("fn", [ad.sigmoid, ad.tanh, ad.relu, ad.exp])
    def test_pointwise_gradients(self, fn):
        rng = np.random.default_rng(2)
        x = leaf(rng.normal(size=(5,)) * 0.8 + 0.1)
        err = grad_check(lambda: ad.sum_(fn(x)), [x])
        assert err < 1e-7

    def test_structural_ops_gradients(self):
        rng = np.random.default_rng(3)
        a = leaf(rng.normal(size=(2, 3)))
        b = leaf(rng.normal(size=(2, 3)))

        def f():
            s = ad.stack([a, b], axis=1)            # (2, 2, 3)
            c = ad.concat([a, b], axis=0)           # (4, 3)
            picked = ad.gather_rows(c, np.array([0, 2, 2, 3]))
            return ad.sum_(s) + ad.sum_(ad.mul(picked, picked)) + ad.sum_(a[0:1, 1:])

        assert grad_check(f, [a, b]) < 1e-7

    def test_max_gradient_goes_to_first_argmax(self):
        x = leaf([[1.0, 5.0, 5.0]])
        ad.sum_(ad.max_(x, axis=1)).backward()
        assert x.grad.tolist() == [[0.0, 1.0, 0.0]]

    def test_clip_gradient_masks_outside(self):
        x = leaf([-1.0, 0.5, 2.0])
        ad.sum_(ad.clip(x, 0.0, 1.0)).backward()
        assert x.grad.tolist() == [0.0, 1.0, 0.0]

    def test_dropout_train_vs_eval(self):
        x = leaf(np.ones(1000))
        out = ad.dropout(x, 0.4, np.random.default_rng(0), training=True)
        kept = out.data != 0
        assert 0.5 < kept.mean() < 0.7
        assert np.allclose(out.data[kept], 1.0 / 0.6)
        same = ad.dropout(x, 0.4, np.random.default_rng(0), training=False)
        assert same is x


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        out = ad.softmax(Tensor([0.0, 0.0, 0.0])).data
        assert np.allclose(out, 1.0 / 3.0, atol=1e-15)

    def test_ln2_case(self):
        out = ad.softmax(Tensor([np.log(2.0), 0.0])).data
        assert abs(out[0] - 2.0 / 3.0) < 1e-12
        assert abs(out[1] - 1.0 / 3.0) < 1e-12

    def test_large_logits_no_overflow(self):
        out = ad.softmax(Tensor([1000.0, 0.0])).data
        assert np.all(np.isfinite(out))
        assert out[0] > 1.0 - 1e-12 and out[1] < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ad.softmax(Tensor(np.zeros(0)))

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
    @settings(deadline=None)
    def test_sums_to_one(self, logits):
        out = ad.softmax(Tensor(logits)).data
        assert abs(out.sum() - 1.0) <= 1e-12
        assert np.all(out > 0)

    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=6), st.randoms())
    @settings(deadline=None)
    def test_permutation_equivariant(self, logits, pyrand):
        perm = list(range(len(logits)))
        pyrand.shuffle(perm)
        direct = ad.softmax(Tensor([logits[i] for i in perm])).data
        permuted = ad.softmax(Tensor(logits)).data[perm]
        assert np.allclose(direct, permuted, atol=1e-15)

    def test_gradient(self):
        x = leaf(np.random.default_rng(4).normal(size=(2, 5)))
        w = Tensor(np.random.default_rng(5).normal(size=(2, 5)))
        err = grad_check(lambda: ad.sum_(ad.mul(ad.softmax(x, axis=1), w)), [x])
        assert err < 1e-7


class TestCosine:
    def test_identical_vectors(self):
        v = Tensor([1.0, 2.0])
        assert abs(ad.cosine(v, v).item() - 1.0) < 1e-12

    def test_orthogonal(self):
        assert abs(ad.cosine(Tensor([1.0, 0.0]), Tensor([0.0, 1.0])).item()) < 1e-15

    def test_opposite(self):
        out = ad.cosine(Tensor([1.0, 0.0]), Tensor([-1.0, 0.0])).item()
        assert abs(out + 1.0) < 1e-12

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            ad.cosine(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))

    def test_near_zero_vector_gives_zero(self):
        out = ad.cosine(Tensor([0.0, 1e-13]), Tensor([1.0, 1.0])).item()
        assert out == 0.0

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=6),
           st.lists(st.floats(-10, 10), min_size=2, max_size=6),
           st.floats(0.01, 100.0))
    @settings(deadline=None)
    def test_bounded_symmetric_scale_invariant(self, a, b, c):
        n = min(len(a), len(b))
        a, b = np.array(a[:n]), np.array(b[:n])
        ab = ad.cosine(Tensor(a), Tensor(b)).item()
        ba = ad.cosine(Tensor(b), Tensor(a)).item()
        scaled = ad.cosine(Tensor(c * a), Tensor(b)).item()
        assert -1.0 - 1e-12 <= ab <= 1.0 + 1e-12
        assert abs(ab - ba) < 1e-12
        if np.linalg.norm(a) >= 1e-12 and np.linalg.norm(c * a) >= 1e-12:
            assert abs(scaled - ab) < 1e-9

    def test_gradient(self):
        rng = np.random.default_rng(6)
        a, b = leaf(rng.normal(size=4)), leaf(rng.normal(size=4))
        assert grad_check(lambda: ad.cosine(a, b), [a, b]) < 1e-7


class TestGradCheckContract:
    def test_epsilon_range_enforced(self):
        x = leaf([1.0])
        with pytest.raises(ValueError):
            grad_check(lambda: ad.sum_(x), [x], epsilon=1e-2)

    def test_nonfinite_objective_rejected(self):
        x = leaf([0.0])
        with np.errstate(divide="ignore"), pytest.raises(FloatingPointError):
            grad_check(lambda: ad.log(x), [x])
