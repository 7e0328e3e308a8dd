"""Tape engine: forward values, backward gradients, finite-difference agreement."""

import numpy as np
import numpy.testing as npt
import pytest

from botdet import autodiff as ad
from botdet.autodiff import Tensor
from botdet.optim import Adam, clip_global_norm
from botdet.errors import NumericError

from helpers import gradcheck, max_rel_err


class TestForward:
    def test_sigmoid_at_zero(self):
        assert ad.sigmoid(Tensor(0.0)).item() == 0.5

    def test_sigmoid_extreme_inputs_stay_finite(self):
        out = ad.sigmoid(Tensor([-1000.0, 1000.0])).data
        assert np.all(np.isfinite(out))
        npt.assert_allclose(out, [0.0, 1.0], atol=1e-12)

    def test_matmul_identity(self):
        a = np.arange(6, dtype=float).reshape(2, 3)
        out = ad.matmul(Tensor(a), Tensor(np.eye(3)))
        npt.assert_array_equal(out.data, a)

    def test_matmul_shape_error_names_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))

    def test_elementwise_shape_error_names_op(self):
        with pytest.raises(ValueError, match="add"):
            ad.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))

    def test_concat_and_slice_round_trip(self):
        a, b = Tensor(np.ones((2, 2))), Tensor(np.zeros((2, 3)))
        c = ad.concat([a, b], axis=1)
        assert c.shape == (2, 5)
        npt.assert_array_equal(c[:, :2].data, a.data)
        npt.assert_array_equal(c[:, 2:].data, b.data)

    def test_clip_values(self):
        out = ad.clip(Tensor([-1.0, 0.5, 2.0]), 0.0, 1.0)
        npt.assert_array_equal(out.data, [0.0, 0.5, 1.0])


class TestBackward:
    def test_sigmoid_grad_at_zero(self):
        x = Tensor(0.0, requires_grad=True)
        ad.sigmoid(x).backward()
        npt.assert_allclose(x.grad, 0.25, rtol=1e-12)

    def test_product_grads(self):
        w = Tensor(3.0, requires_grad=True)
        x = Tensor(2.0, requires_grad=True)
        (w * x).backward()
        assert w.grad == 2.0 and x.grad == 3.0

    def test_disconnected_param_grad_stays_zero(self):
        w = Tensor(3.0, requires_grad=True)
        unused = Tensor(np.ones(4), requires_grad=True)
        (w * 2.0).backward()
        npt.assert_array_equal(unused.grad, np.zeros(4))

    def test_backward_twice_accumulates(self):
        x = Tensor(1.0, requires_grad=True)
        (x * 5.0).backward()
        (x * 5.0).backward()
        assert x.grad == 10.0

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            ad.backward(x * 2.0)

    def test_bias_broadcast_grad_sums_over_batch(self):
        b = Tensor(np.zeros(3), requires_grad=True)
        x = Tensor(np.ones((4, 3)))
        ad.sum_all(x + b).backward()
        npt.assert_array_equal(b.grad, np.full(3, 4.0))

    def test_shared_subexpression_accumulates(self):
        x = Tensor(2.0, requires_grad=True)
        y = x * x  # dy/dx = 2x = 4
        ad.add(y, x).backward()
        npt.assert_allclose(x.grad, 5.0, rtol=1e-12)

    def test_no_grad_suppresses_recording(self):
        x = Tensor(1.0, requires_grad=True)
        with ad.no_grad():
            y = ad.sigmoid(x * 3.0)
        assert y._parents == ()

    def test_slice_grad_scatters(self):
        x = Tensor(np.arange(6, dtype=float).reshape(2, 3), requires_grad=True)
        ad.sum_all(x[:, 1:]) .backward()
        npt.assert_array_equal(x.grad, [[0, 1, 1], [0, 1, 1]])


class TestFiniteDifferenceOracle:
    def test_quadratic(self):
        x = Tensor(3.0)
        g = ad.finite_difference_grad(lambda t: float(t.data) ** 2, x)
        npt.assert_allclose(g, 6.0, rtol=1e-6)

    def test_sum(self):
        x = Tensor(np.arange(4, dtype=float))
        g = ad.finite_difference_grad(lambda t: float(t.data.sum()), x)
        npt.assert_allclose(g, np.ones(4), rtol=1e-8)

    def test_leaves_input_untouched(self):
        x = Tensor(np.array([1.0, 2.0]))
        before = x.data.copy()
        ad.finite_difference_grad(lambda t: float((t.data ** 3).sum()), x)
        npt.assert_array_equal(x.data, before)


class TestGradcheckPrimitives:
    """Every primitive, random small shapes, analytic vs central differences."""

    def test_linear_sigmoid_chain(self):
        rng = np.random.default_rng(7)
        w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=4), requires_grad=True)
        x = Tensor(rng.normal(size=(5, 3)))

        def f():
            return ad.sum_all(ad.sigmoid(ad.matmul(x, w) + b))

        assert gradcheck(f, [w, b]) < 1e-4

    @pytest.mark.parametrize("op", [ad.sigmoid, ad.tanh, ad.relu, ad.exp])
    def test_unary_ops(self, op):
        rng = np.random.default_rng(11)
        x = Tensor(rng.normal(size=(4, 3)) + 0.05, requires_grad=True)

        def f():
            return ad.sum_all(op(x) * op(x))

        assert gradcheck(f, [x]) < 1e-4

    def test_log_clip(self):
        rng = np.random.default_rng(13)
        x = Tensor(rng.uniform(0.2, 0.8, size=(4, 3)), requires_grad=True)

        def f():
            return ad.sum_all(ad.log(ad.clip(x, 1e-7, 1.0 - 1e-7)))

        assert gradcheck(f, [x]) < 1e-4

    def test_concat_slice_mix(self):
        rng = np.random.default_rng(17)
        a = Tensor(rng.normal(size=(2, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, 2)), requires_grad=True)

        def f():
            c = ad.concat([a, b], axis=1)
            return ad.sum_all(ad.tanh(c[:, 1:4]))

        assert gradcheck(f, [a, b]) < 1e-4

    def test_sub_neg_mul(self):
        rng = np.random.default_rng(19)
        a = Tensor(rng.normal(size=(3,)), requires_grad=True)
        b = Tensor(rng.normal(size=(3,)), requires_grad=True)

        def f():
            return ad.sum_all((1.0 - a) * (-b) - a * 0.5)

        assert gradcheck(f, [a, b]) < 1e-4


class TestAdam:
    def test_first_step_magnitude(self):
        # g=1: m_hat=1, v_hat=1, step = lr/(1+eps) ~ lr
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam([p], lr=0.01)
        p.grad[...] = 1.0
        opt.step()
        npt.assert_allclose(p.data, [-0.01], atol=1e-8)

    def test_zero_grad_leaves_param_unchanged(self):
        p = Tensor(np.array([1.5]), requires_grad=True)
        opt = Adam([p], lr=0.1)
        opt.step()
        npt.assert_array_equal(p.data, [1.5])

    def test_constant_gradient_step_magnitude_non_increasing(self):
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam([p], lr=0.01)
        prev = None
        for _ in range(5):
            before = p.data.copy()
            p.grad[...] = 1.0
            opt.step()
            p.zero_grad()
            delta = abs(float(p.data[0] - before[0]))
            if prev is not None:
                assert delta <= prev * (1.0 + 1e-9)
            prev = delta

    def test_non_finite_gradient_raises(self):
        p = Tensor(np.array([0.0]), requires_grad=True)
        opt = Adam([p])
        p.grad[...] = np.nan
        with pytest.raises(NumericError):
            opt.step()


class TestClipGlobalNorm:
    def test_norm_above_threshold_scaled(self):
        p = Tensor(np.zeros(4), requires_grad=True)
        p.grad[...] = 3.0  # norm 6
        norm = clip_global_norm([p], 5.0)
        npt.assert_allclose(norm, 6.0)
        npt.assert_allclose(np.linalg.norm(p.grad), 5.0)

    def test_norm_below_threshold_untouched(self):
        p = Tensor(np.zeros(4), requires_grad=True)
        p.grad[...] = 0.5
        clip_global_norm([p], 5.0)
        npt.assert_array_equal(p.grad, np.full(4, 0.5))

    def test_non_finite_raises(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        p.grad[...] = np.inf
        with pytest.raises(NumericError):
            clip_global_norm([p], 5.0)


def test_max_rel_err_helper():
    assert max_rel_err(np.array([1.0]), np.array([1.0])) == 0.0
    assert max_rel_err(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)
