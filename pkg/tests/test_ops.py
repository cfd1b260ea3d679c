"""Tensor primitive tests: hand-computed cases, loop oracles, and
finite-difference gradient checks."""

import numpy as np
import pytest

from segpipe import ops
from segpipe.errors import (
    DimensionError,
    GeometryError,
    LabelError,
    NumericError,
    ParameterError,
)

from oracles import conv2d_loops, finite_difference, max_rel_err

LN12 = 2.4849066497880004


class TestConvForward:
    def test_identity_1x1_kernel(self):
        x = np.random.default_rng(0).normal(size=(2, 3, 4, 5)).astype(np.float32)
        w = np.zeros((3, 3, 1, 1), dtype=np.float32)
        for c in range(3):
            w[c, c, 0, 0] = 1.0
        out = ops.conv2d_forward(x, w, np.zeros(3, np.float32))
        np.testing.assert_array_equal(out, x)

    def test_all_ones_3x3_sum(self):
        x = np.full((1, 1, 3, 3), 2.0, dtype=np.float32)
        w = np.ones((1, 1, 3, 3), dtype=np.float32)
        out = ops.conv2d_forward(x, w, np.zeros(1, np.float32))
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == pytest.approx(18.0)

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_matches_loop_oracle(self, stride, padding):
        rng = np.random.default_rng(10 * stride + padding)
        x = rng.normal(size=(1, 2, 5, 5)).astype(np.float32)
        w = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        b = rng.normal(size=3).astype(np.float32)
        got = ops.conv2d_forward(x, w, b, stride, padding)
        want = conv2d_loops(x, w, b, stride, padding)
        np.testing.assert_allclose(got, want, atol=1e-5)

    @pytest.mark.parametrize("seed", range(8))
    def test_loop_oracle_random_shapes(self, seed):
        rng = np.random.default_rng(seed)
        n, cin, cout = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
        h, w = rng.integers(3, 7), rng.integers(3, 7)
        k = int(rng.choice([1, 3]))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        x = rng.normal(size=(n, cin, h, w)).astype(np.float32)
        wt = rng.normal(size=(cout, cin, k, k)).astype(np.float32)
        b = rng.normal(size=cout).astype(np.float32)
        got = ops.conv2d_forward(x, wt, b, stride, padding)
        want = conv2d_loops(x, wt, b, stride, padding)
        np.testing.assert_allclose(got, want, atol=1e-5)

    def test_linearity_zero_bias(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 3, 6, 6)).astype(np.float32)
        w = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
        b = np.zeros(4, np.float32)
        lhs = ops.conv2d_forward(3.0 * x, w, b, 1, 1)
        rhs = 3.0 * ops.conv2d_forward(x, w, b, 1, 1)
        assert max_rel_err(lhs, rhs) < 1e-4

    def test_output_stays_finite(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(1, 2, 8, 8)).astype(np.float32) * 100
        w = rng.normal(size=(2, 2, 3, 3)).astype(np.float32)
        out = ops.conv2d_forward(x, w, np.ones(2, np.float32), 2, 1)
        assert np.isfinite(out).all()

    def test_shape_errors(self):
        x = np.zeros((1, 2, 4, 4), np.float32)
        with pytest.raises(DimensionError):
            ops.conv2d_forward(x, np.zeros((3, 3, 3, 3), np.float32),
                               np.zeros(3, np.float32))
        with pytest.raises(DimensionError):
            ops.conv2d_forward(x, np.zeros((3, 2, 3, 3), np.float32),
                               np.zeros(4, np.float32))
        with pytest.raises(DimensionError):  # even kernel
            ops.conv2d_forward(x, np.zeros((3, 2, 2, 2), np.float32),
                               np.zeros(3, np.float32))

    def test_geometry_error_kernel_too_large(self):
        x = np.zeros((1, 1, 3, 3), np.float32)
        with pytest.raises(GeometryError):
            ops.conv2d_forward(x, np.zeros((1, 1, 5, 5), np.float32),
                               np.zeros(1, np.float32))

    def test_parameter_errors(self):
        x = np.zeros((1, 1, 4, 4), np.float32)
        w = np.zeros((1, 1, 3, 3), np.float32)
        b = np.zeros(1, np.float32)
        with pytest.raises(ParameterError):
            ops.conv2d_forward(x, w, b, stride=0)
        with pytest.raises(ParameterError):
            ops.conv2d_forward(x, w, b, padding=-1)


class TestConvBackward:
    def test_zero_grad_output(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 2, 4, 4)).astype(np.float32)
        w = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        gx, gw, gb = ops.conv2d_backward(x, w, np.zeros((1, 3, 2, 2), np.float32), 1, 0)
        assert not gx.any() and not gw.any() and not gb.any()

    def test_scalar_case(self):
        x = np.array([[[[2.0]]]], dtype=np.float32)
        w = np.array([[[[3.0]]]], dtype=np.float32)
        g = np.array([[[[5.0]]]], dtype=np.float32)
        gx, gw, gb = ops.conv2d_backward(x, w, g)
        assert gx[0, 0, 0, 0] == pytest.approx(15.0)  # w * g
        assert gw[0, 0, 0, 0] == pytest.approx(10.0)  # x * g
        assert gb[0] == pytest.approx(5.0)  # g

    @pytest.mark.parametrize("seed", range(6))
    def test_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, 2))
        x = rng.normal(size=(2, 2, 5, 5))
        w = rng.normal(size=(3, 2, 3, 3))
        b = rng.normal(size=3)
        proj = rng.normal(size=ops.conv2d_forward(x, w, b, stride, padding).shape)

        def loss():
            return float((ops.conv2d_forward(x, w, b, stride, padding) * proj).sum())

        gx, gw, gb = ops.conv2d_backward(x, w, proj, stride, padding)
        assert max_rel_err(gx, finite_difference(loss, x)) < 1e-3
        assert max_rel_err(gw, finite_difference(loss, w)) < 1e-3
        assert max_rel_err(gb, finite_difference(loss, b)) < 1e-3

    def test_grad_shape_mismatch(self):
        x = np.zeros((1, 1, 4, 4), np.float32)
        w = np.zeros((1, 1, 3, 3), np.float32)
        with pytest.raises(DimensionError):
            ops.conv2d_backward(x, w, np.zeros((1, 1, 4, 4), np.float32), 1, 0)


class TestLeakyRelu:
    @pytest.mark.parametrize("x,alpha,want", [
        (5.0, 0.01, 5.0),
        (0.0, 0.01, 0.0),
        (-10.0, 0.01, -0.1),
        (-4.0, 0.2, -0.8),
    ])
    def test_values(self, x, alpha, want):
        out = ops.leaky_relu(np.array([x], np.float32), alpha)
        assert out[0] == pytest.approx(want)

    def test_keeps_dtype(self):
        out = ops.leaky_relu(np.array([-1.0, 1.0], np.float32))
        assert out.dtype == np.float32

    def test_backward_slope_one_at_zero(self):
        x = np.array([0.0, -1.0, 1.0], np.float32)
        g = np.ones(3, np.float32)
        out = ops.leaky_relu_backward(x, g, 0.01)
        np.testing.assert_allclose(out, [1.0, 0.01, 1.0], rtol=1e-6)

    @pytest.mark.parametrize("seed", range(4))
    def test_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        # keep entries away from the kink at 0 where the derivative jumps
        x = rng.normal(size=(2, 3, 4, 4))
        x[np.abs(x) < 0.05] = 0.1
        proj = rng.normal(size=x.shape)

        def loss():
            return float((ops.leaky_relu(x, 0.01) * proj).sum())

        grad = ops.leaky_relu_backward(x, proj, 0.01)
        assert max_rel_err(grad, finite_difference(loss, x)) < 1e-3

    def test_alpha_range(self):
        with pytest.raises(ParameterError):
            ops.leaky_relu(np.zeros(2, np.float32), alpha=1.5)
        with pytest.raises(ParameterError):
            ops.leaky_relu(np.zeros(2, np.float32), alpha=0.0)


class TestUpsample:
    def test_factor_one_is_identity(self):
        x = np.random.default_rng(0).normal(size=(1, 2, 3, 3)).astype(np.float32)
        np.testing.assert_array_equal(ops.upsample_nearest(x, 1), x)

    def test_single_pixel_replication(self):
        x = np.full((1, 1, 1, 1), 3.0, np.float32)
        out = ops.upsample_nearest(x, 2)
        np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 3.0, np.float32))
        back = ops.upsample_nearest_backward(np.ones((1, 1, 2, 2), np.float32), 2)
        assert back[0, 0, 0, 0] == pytest.approx(4.0)

    def test_replication_pattern(self):
        x = np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2)
        out = ops.upsample_nearest(x, 2)
        for y in range(4):
            for xx in range(4):
                assert out[0, 0, y, xx] == x[0, 0, y // 2, xx // 2]

    @pytest.mark.parametrize("factor", [1, 2, 3])
    def test_gradient_mass_conserved(self, factor):
        rng = np.random.default_rng(factor)
        g = rng.normal(size=(2, 3, 4 * factor, 5 * factor)).astype(np.float32)
        back = ops.upsample_nearest_backward(g, factor)
        assert float(back.sum()) == pytest.approx(float(g.sum()), rel=1e-4)

    @pytest.mark.parametrize("seed", range(4))
    def test_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(1, 2, 3, 4))
        proj = rng.normal(size=(1, 2, 6, 8))

        def loss():
            return float((ops.upsample_nearest(x, 2) * proj).sum())

        grad = ops.upsample_nearest_backward(proj, 2)
        assert max_rel_err(grad, finite_difference(loss, x)) < 1e-3

    def test_bad_factor(self):
        with pytest.raises(ParameterError):
            ops.upsample_nearest(np.zeros((1, 1, 2, 2), np.float32), 0)
        with pytest.raises(ParameterError):
            ops.upsample_nearest_backward(np.zeros((1, 1, 2, 2), np.float32), -1)


class TestSoftmax:
    def test_symmetry(self):
        np.testing.assert_allclose(ops.softmax(np.array([0.0, 0.0])), [0.5, 0.5])

    def test_closed_form(self):
        out = ops.softmax(np.array([np.log(2.0), 0.0]))
        np.testing.assert_allclose(out, [2 / 3, 1 / 3], rtol=1e-6)

    def test_large_logits_no_overflow(self):
        out = ops.softmax(np.array([1000.0, 0.0]))
        np.testing.assert_allclose(out, [1.0, 0.0], atol=1e-12)
        assert np.isfinite(out).all()

    def test_sums_to_one_per_position(self):
        rng = np.random.default_rng(1)
        z = rng.normal(size=(2, 12, 5, 5)).astype(np.float32) * 10
        p = ops.softmax(z, axis=1)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-5)
        assert ((p >= 0) & (p <= 1)).all()

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        z = rng.normal(size=(3, 7)).astype(np.float32)
        p1 = ops.softmax(z, axis=1)
        p2 = ops.softmax(z + 123.0, axis=1)
        np.testing.assert_allclose(p1, p2, atol=1e-5)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericError):
            ops.softmax(np.array([np.inf, 0.0]))

    def test_needs_two_classes(self):
        with pytest.raises(DimensionError):
            ops.softmax(np.ones((3, 1)), axis=1)


class TestCrossEntropy:
    def test_one_hot_expansion(self):
        np.testing.assert_array_equal(
            ops.one_hot(np.array(2), 4), [0.0, 0.0, 1.0, 0.0]
        )

    def test_one_hot_exactly_one_per_position(self):
        labels = np.random.default_rng(0).integers(0, 12, size=(2, 4, 4))
        oh = ops.one_hot(labels, 12, class_axis=1)
        assert oh.shape == (2, 12, 4, 4)
        np.testing.assert_array_equal(oh.sum(axis=1), np.ones((2, 4, 4)))

    def test_perfect_prediction_zero_loss(self):
        probs = ops.one_hot(np.array([[1, 0], [2, 3]]), 4, dtype=np.float64,
                            class_axis=1)
        # clamped at 1e-12, so "0" here means < 1e-9
        assert ops.cross_entropy(probs, np.array([[1, 0], [2, 3]])) < 1e-9

    def test_uniform_prediction_ln12(self):
        probs = np.full((1, 12, 3, 3), 1 / 12, dtype=np.float64)
        labels = np.random.default_rng(0).integers(0, 12, size=(1, 3, 3))
        assert ops.cross_entropy(probs, labels) == pytest.approx(LN12, abs=1e-6)

    def test_label_out_of_range(self):
        probs = np.full((1, 4, 2, 2), 0.25)
        with pytest.raises(LabelError):
            ops.cross_entropy(probs, np.full((1, 2, 2), 4))
        with pytest.raises(LabelError):
            ops.one_hot(np.array([-1]), 4)

    def test_fused_grad_is_p_minus_target_over_m(self):
        rng = np.random.default_rng(5)
        logits = rng.normal(size=(2, 5, 3, 3)).astype(np.float32)
        labels = rng.integers(0, 5, size=(2, 3, 3))
        loss, grad = ops.softmax_cross_entropy(logits, labels)
        p = ops.softmax(logits, axis=1)
        want = (p - ops.one_hot(labels, 5, class_axis=1)) / labels.size
        np.testing.assert_allclose(grad, want, atol=1e-6)
        assert loss == pytest.approx(ops.cross_entropy(p, labels), rel=1e-6)

    @pytest.mark.parametrize("seed", range(4))
    def test_fused_finite_difference(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(1, 4, 3, 3))
        labels = rng.integers(0, 4, size=(1, 3, 3))

        def loss():
            return ops.softmax_cross_entropy(logits, labels)[0]

        _, grad = ops.softmax_cross_entropy(logits, labels)
        assert max_rel_err(grad, finite_difference(loss, logits)) < 1e-3
