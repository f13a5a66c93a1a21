"""Autodiff engine: ops, gradients, initializers, dropout, optimizers."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmner.errors import ContractError, NumericError
from lmner.optim import Adam, clip_global_norm
from lmner.tensor import (Tensor, backward, concat, dropout, init_uniform, init_xavier,
                          make_rng, no_grad, softmax_cross_entropy)
from oracles import finite_difference_grad, max_relative_error


def param(rng, *shape):
    return Tensor(rng.standard_normal(shape), requires_grad=True)


class TestBackwardBasics:
    def test_sum_gradient_is_ones(self):
        w = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        backward(w.sum())
        assert np.array_equal(w.grad, [1.0, 1.0, 1.0])

    def test_quadratic_gradient(self):
        w = Tensor(np.array([2.0, -3.0]), requires_grad=True)
        backward((w * w).sum())
        assert np.allclose(w.grad, [4.0, -6.0])

    def test_non_scalar_loss_rejected(self):
        w = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ContractError):
            backward(w * 2.0)

    def test_gradients_accumulate_until_cleared(self):
        w = Tensor(np.array([1.0, 1.0]), requires_grad=True)
        backward(w.sum())
        backward(w.sum())
        assert np.allclose(w.grad, [2.0, 2.0])
        w.zero_grad()
        backward(w.sum())
        assert np.allclose(w.grad, [1.0, 1.0])

    def test_shared_subgraph_across_two_backwards(self):
        w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        shared = w * 3.0
        backward(shared.sum())
        backward((shared * shared).sum())
        # d/dw [3w] = 3; d/dw [9w^2] = 18w
        assert np.allclose(w.grad, 3.0 + 18.0 * w.data)

    def test_nan_detection_names_op(self):
        w = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        bad = Tensor(np.array([[np.inf], [-np.inf]]))
        with np.errstate(invalid="ignore"):
            loss = (w @ bad).sum() * 0.0  # inf * 0 -> nan downstream
            with pytest.raises(NumericError):
                backward(loss)

    def test_no_grad_builds_no_graph(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            out = (w * 2.0).sum()
        assert not out.requires_grad


class TestOpGradients:
    """Randomized finite-difference checks, double precision, h=1e-4."""

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_composite_expression(self, seed):
        rng = make_rng(seed)
        W = param(rng, 4, 5)
        b = param(rng, 5)
        x = param(rng, 3, 4)
        targets = np.array([1, 0, 4])

        def build():
            h = (x @ W + b).tanh()
            s = (h * h).sigmoid()
            both = concat([h, s], axis=1)
            pooled = both.max(axis=1)
            lse = both.logsumexp(axis=1)
            sliced = both[:, 2:7].relu()
            ce = softmax_cross_entropy(sliced, targets, reduction="mean")
            return ce + pooled.sum() * 0.3 + lse.sum() * 0.1 + both[0:2, 1:3].sum()

        loss = build()
        backward(loss)
        for p in (W, b, x):
            numeric = finite_difference_grad(lambda: build().item(), p)
            assert max_relative_error(p.grad, numeric) < 1e-4

    def test_gather_with_duplicates(self):
        rng = make_rng(9)
        E = param(rng, 6, 3)
        idx = np.array([0, 2, 2, 5])

        def build():
            g = E.take_rows(idx)
            return (g * g).sum()

        backward(build())
        numeric = finite_difference_grad(lambda: build().item(), E)
        assert max_relative_error(E.grad, numeric) < 1e-4

    def test_transpose_reshape_matmul(self):
        rng = make_rng(11)
        A = param(rng, 2, 3, 4)

        def build():
            flat = A.transpose((2, 0, 1)).reshape(4, 6)
            return (flat @ flat.transpose()).logsumexp(axis=0).sum()

        backward(build())
        numeric = finite_difference_grad(lambda: build().item(), A)
        assert max_relative_error(A.grad, numeric) < 1e-4

    def test_broadcast_add_mul(self):
        rng = make_rng(13)
        a = param(rng, 3, 1)
        b = param(rng, 3, 4)

        def build():
            return ((a + b) * a).sum()

        backward(build())
        for p in (a, b):
            numeric = finite_difference_grad(lambda: build().item(), p)
            assert max_relative_error(p.grad, numeric) < 1e-4

    def test_max_tie_goes_to_first(self):
        x = Tensor(np.array([[1.0, 1.0, 0.0]]), requires_grad=True)
        backward(x.max(axis=1).sum())
        assert np.array_equal(x.grad, [[1.0, 0.0, 0.0]])


class TestInitializers:
    def test_uniform_within_bounds(self):
        t = init_uniform((100, 40), -0.005, 0.005, make_rng(1))
        assert t.data.min() >= -0.005 and t.data.max() <= 0.005

    def test_uniform_requires_ordered_bounds(self):
        with pytest.raises(ContractError):
            init_uniform((3,), 1.0, -1.0, make_rng(1))

    def test_xavier_bound_for_256x256(self):
        t = init_xavier((256, 256), make_rng(2))
        bound = np.sqrt(6.0 / 512.0)
        assert abs(bound - 0.10825) < 1e-4
        assert np.abs(t.data).max() <= bound

    def test_same_seed_same_tensor(self):
        a = init_xavier((20, 30), make_rng(7))
        b = init_xavier((20, 30), make_rng(7))
        assert np.array_equal(a.data, b.data)


class TestDropout:
    def test_inference_is_identity(self):
        x = Tensor(np.ones((5, 5)))
        assert dropout(x, 0.5, training=False, rng=make_rng(0)) is x

    def test_p_zero_is_identity(self):
        x = Tensor(np.ones((5, 5)))
        assert dropout(x, 0.0, training=True, rng=make_rng(0)) is x

    def test_p_one_rejected(self):
        with pytest.raises(ContractError):
            dropout(Tensor(np.ones(3)), 1.0, training=True, rng=make_rng(0))

    def test_inverted_scaling_preserves_mean(self):
        x = Tensor(np.ones(100_000))
        out = dropout(x, 0.5, training=True, rng=make_rng(3))
        assert 0.98 < float(out.data.mean()) < 1.02

    def test_survivors_scaled(self):
        out = dropout(Tensor(np.ones(1000)), 0.25, training=True, rng=make_rng(4))
        kept = out.data[out.data != 0]
        assert np.allclose(kept, 1.0 / 0.75)


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = Adam([p], lr=0.1)
        for _ in range(5):
            p.grad = np.zeros(2)
            opt.step()
        assert np.array_equal(p.data, [1.0, -2.0])

    def test_first_step_hand_value(self):
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam([p], lr=1e-3)
        p.grad = np.array([1.0])
        opt.step()
        # bias correction makes m_hat = v_hat = 1 at step 1
        assert abs(p.data[0] - (-1e-3)) < 1e-6

    def test_identical_params_identical_updates(self):
        rng = make_rng(5)
        init = rng.standard_normal(4)
        g = rng.standard_normal(4)
        a = Tensor(init.copy(), requires_grad=True)
        b = Tensor(init.copy(), requires_grad=True)
        opt = Adam([a, b], lr=2e-3)
        a.grad, b.grad = g.copy(), g.copy()
        opt.step()
        assert np.array_equal(a.data, b.data)

    def test_missing_grad_rejected(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        opt = Adam([p])
        with pytest.raises(ContractError):
            opt.step()

    def test_grads_left_intact(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        opt = Adam([p])
        p.grad = np.ones(2)
        opt.step()
        assert np.array_equal(p.grad, np.ones(2))


class TestClipGlobalNorm:
    def test_three_four_five(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([3.0, 4.0])
        norm = clip_global_norm([p], 1.0)
        assert abs(norm - 5.0) < 1e-6
        assert abs(np.linalg.norm(p.grad) - 1.0) < 1e-6

    def test_below_threshold_unchanged(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([0.3, 0.4])
        norm = clip_global_norm([p], 1.0)
        assert abs(norm - 0.5) < 1e-7
        assert np.allclose(p.grad, [0.3, 0.4])

    def test_all_zero_grads(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        p.grad = np.zeros(3)
        assert clip_global_norm([p], 1.0) == 0.0
        assert np.array_equal(p.grad, np.zeros(3))

    def test_idempotent(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad = np.array([30.0, 40.0])
        clip_global_norm([p], 1.0)
        after_once = p.grad.copy()
        second_norm = clip_global_norm([p], 1.0)
        assert abs(second_norm - 1.0) < 1e-6
        assert np.allclose(p.grad, after_once)

    def test_spans_multiple_tensors(self):
        a = Tensor(np.zeros(1), requires_grad=True)
        b = Tensor(np.zeros(1), requires_grad=True)
        a.grad, b.grad = np.array([3.0]), np.array([4.0])
        assert abs(clip_global_norm([a, b], 1.0) - 5.0) < 1e-6
        total = np.sqrt(a.grad[0] ** 2 + b.grad[0] ** 2)
        assert abs(total - 1.0) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_determinism_same_seed_bit_identical(seed):
    def run():
        rng = make_rng(seed)
        w = init_uniform((4, 4), -0.1, 0.1, rng)
        x = Tensor(rng.standard_normal((2, 4)))
        loss = softmax_cross_entropy((x @ w).relu(), np.array([0, 3]))
        backward(loss)
        opt = Adam([w], lr=1e-2)
        opt.step()
        return w.data.copy(), w.grad.copy()

    d1, g1 = run()
    d2, g2 = run()
    assert np.array_equal(d1, d2) and np.array_equal(g1, g2)
