"""Layer forward/backward contracts, losses, optimizer, gradient checker."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posetokens.numerics import (
    AdamW,
    NumericsError,
    Param,
    Schedule,
    cosine_lr,
    cross_entropy,
    gelu,
    gelu_bwd,
    grad_check,
    init_mixer_block,
    layernorm,
    layernorm_bwd,
    linear,
    linear_bwd,
    mixer_block,
    mixer_block_bwd,
    rel_error,
    smooth_l1,
    softmax,
    softmax_bwd,
)

RNG = np.random.default_rng(0)
H = 1e-5


def fd_grad(f, x, h=H):
    """Central finite differences of scalar f at x, elementwise."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


class TestLinear:
    def test_identity_map(self):
        y = linear(np.array([[1.0, 0.0]]), np.eye(2), np.zeros(2))
        np.testing.assert_array_equal(y, [[1.0, 0.0]])

    def test_scalar_affine(self):
        y = linear(np.array([2.0]), np.array([[3.0]]), np.array([1.0]))
        np.testing.assert_array_equal(y, [7.0])

    def test_shape_mismatch(self):
        with pytest.raises(NumericsError):
            linear(np.zeros((2, 3)), np.zeros((4, 5)), np.zeros(5))

    def test_backward_finite_differences(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(4, 5))
        b = rng.normal(size=5)
        gy = rng.normal(size=(3, 5))

        def loss():
            return float((linear(x, w, b) * gy).sum())

        gx, gw, gb = linear_bwd(gy, x, w)
        assert rel_error(gx, fd_grad(loss, x)) <= 1e-6
        assert rel_error(gw, fd_grad(loss, w)) <= 1e-6
        assert rel_error(gb, fd_grad(loss, b)) <= 1e-6


class TestLayerNorm:
    def test_constant_row_is_zeroed(self):
        y, _ = layernorm(np.array([[5.0, 5.0, 5.0]]), np.ones(3), np.zeros(3))
        np.testing.assert_allclose(y, 0.0, atol=1e-9)

    def test_unit_second_moment(self):
        y, _ = layernorm(np.array([[1.0, -1.0]]), np.ones(2), np.zeros(2))
        assert abs(y.mean()) <= 1e-12
        assert abs((y ** 2).mean() - 1.0) <= 1e-6

    def test_backward_finite_differences(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 8))
        scale = rng.normal(size=8)
        shift = rng.normal(size=8)
        gy = rng.normal(size=(2, 8))

        def loss():
            return float((layernorm(x, scale, shift)[0] * gy).sum())

        _, cache = layernorm(x, scale, shift)
        gx, gscale, gshift = layernorm_bwd(gy, cache)
        assert rel_error(gx, fd_grad(loss, x)) <= 1e-6
        assert rel_error(gscale, fd_grad(loss, scale)) <= 1e-6
        assert rel_error(gshift, fd_grad(loss, shift)) <= 1e-6


class TestGelu:
    def test_fixed_point_at_zero(self):
        assert gelu(np.array(0.0)) == 0.0

    def test_asymptote(self):
        assert abs(gelu(np.array(10.0)) - 10.0) <= 1e-6

    def test_monotone_nonnegative(self):
        x = np.linspace(0, 6, 200)
        assert np.all(np.diff(gelu(x)) > 0)

    def test_backward_finite_differences(self):
        x = np.random.default_rng(3).normal(size=100)
        gy = np.ones_like(x)

        def loss():
            return float(gelu(x).sum())

        assert rel_error(gelu_bwd(gy, x), fd_grad(loss, x)) <= 1e-6


class TestSoftmax:
    def test_uniform_logits(self):
        np.testing.assert_allclose(softmax(np.zeros(4)), 0.25, rtol=0, atol=0)

    def test_large_logits_stable(self):
        p = softmax(np.array([1000.0, 0.0]))
        assert np.all(np.isfinite(p))
        assert abs(p[0] - 1.0) <= 1e-12

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=16))
    @settings(max_examples=50, deadline=None)
    def test_rows_sum_to_one(self, logits):
        p = softmax(np.array(logits))
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(p > 0) and np.all(p < 1.0 + 1e-15)

    def test_backward_finite_differences(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(3, 5))
        gy = rng.normal(size=(3, 5))

        def loss():
            return float((softmax(x) * gy).sum())

        assert rel_error(softmax_bwd(gy, softmax(x)), fd_grad(loss, x)) <= 1e-6


class TestMixerBlock:
    def test_zero_mlp_weights_is_identity(self):
        rng = np.random.default_rng(5)
        p = init_mixer_block(rng, "blk", tokens=6, channels=4)
        for param in (p.token_w1, p.token_w2, p.chan_w1, p.chan_w2,
                      p.token_b1, p.token_b2, p.chan_b1, p.chan_b2):
            param.value[...] = 0.0
        x = rng.normal(size=(6, 4))
        y, _ = mixer_block(x, p)
        np.testing.assert_array_equal(y, x)

    def test_shape_contract(self):
        rng = np.random.default_rng(6)
        p = init_mixer_block(rng, "blk", tokens=16, channels=64)
        x = rng.normal(size=(16, 64))
        y, _ = mixer_block(x, p)
        assert y.shape == (16, 64)
        with pytest.raises(NumericsError):
            mixer_block(rng.normal(size=(8, 64)), p)

    def test_full_block_backward(self):
        rng = np.random.default_rng(7)
        p = init_mixer_block(rng, "blk", tokens=4, channels=6, init_std=0.3)
        # second MLP layers init at zero; fill them so every path carries signal
        p.token_w2.value[...] = rng.normal(0.0, 0.3, p.token_w2.value.shape)
        p.chan_w2.value[...] = rng.normal(0.0, 0.3, p.chan_w2.value.shape)
        x = rng.normal(size=(4, 6))
        gy = rng.normal(size=(4, 6))

        def loss():
            return float((mixer_block(x, p)[0] * gy).sum())

        _, cache = mixer_block(x, p)
        gx = mixer_block_bwd(gy, p, cache)
        assert rel_error(gx, fd_grad(loss, x)) <= 1e-5
        for param in p.params():
            assert rel_error(param.grad, fd_grad(loss, param.value)) <= 1e-5, param.name

    def test_channel_only_variant_backward(self):
        rng = np.random.default_rng(8)
        p = init_mixer_block(rng, "blk", tokens=4, channels=6,
                             mix_tokens=False, init_std=0.3)
        p.chan_w2.value[...] = rng.normal(0.0, 0.3, p.chan_w2.value.shape)
        x = rng.normal(size=(4, 6))
        gy = rng.normal(size=(4, 6))

        def loss():
            return float((mixer_block(x, p)[0] * gy).sum())

        _, cache = mixer_block(x, p)
        gx = mixer_block_bwd(gy, p, cache)
        assert rel_error(gx, fd_grad(loss, x)) <= 1e-5
        for param in p.params():
            assert rel_error(param.grad, fd_grad(loss, param.value)) <= 1e-5

    def test_bitwise_deterministic(self):
        rng = np.random.default_rng(9)
        p = init_mixer_block(rng, "blk", tokens=5, channels=7)
        x = rng.normal(size=(5, 7))
        y1, _ = mixer_block(x, p)
        y2, _ = mixer_block(x, p)
        assert y1.tobytes() == y2.tobytes()


class TestSmoothL1:
    def test_zero_residual(self):
        loss, grad = smooth_l1(np.ones(5), np.ones(5))
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_closed_form_values(self):
        assert smooth_l1(np.array([0.5]), np.array([0.0]))[0] == pytest.approx(0.125)
        assert smooth_l1(np.array([2.0]), np.array([0.0]))[0] == pytest.approx(1.5)

    def test_all_zero_mask_rejected(self):
        with pytest.raises(NumericsError):
            smooth_l1(np.ones(3), np.zeros(3), weights=np.zeros(3))

    def test_gradient_away_from_kink(self):
        rng = np.random.default_rng(10)
        pred = rng.normal(size=(3, 4)) * 3
        target = rng.normal(size=(3, 4)) * 3
        # keep every residual away from |e| = 1 so FD stays on one branch
        e = pred - target
        pred = np.where(np.abs(np.abs(e) - 1.0) < 0.05, pred + 0.2, pred)
        w = (rng.random((3, 4)) > 0.3).astype(float)
        w[0, 0] = 1.0

        def loss():
            return smooth_l1(pred, target, weights=w)[0]

        _, grad = smooth_l1(pred, target, weights=w)
        assert rel_error(grad, fd_grad(loss, pred)) <= 1e-6

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_nonnegative_zero_iff_equal(self, seed):
        rng = np.random.default_rng(seed)
        pred = rng.normal(size=6)
        target = rng.normal(size=6)
        loss, _ = smooth_l1(pred, target)
        assert loss >= 0.0
        assert (loss == 0.0) == bool(np.array_equal(pred, target))


class TestCrossEntropy:
    def test_near_perfect_prediction(self):
        logits = np.zeros((2, 8))
        logits[0, 3] = 50.0
        logits[1, 5] = 50.0
        loss, _ = cross_entropy(logits, np.array([3, 5]))
        assert loss <= 1e-9

    def test_uniform_entropy(self):
        loss, _ = cross_entropy(np.zeros((4, 1024)), np.array([0, 1, 2, 3]))
        assert loss == pytest.approx(math.log(1024), rel=1e-12)

    def test_out_of_range_label(self):
        with pytest.raises(NumericsError):
            cross_entropy(np.zeros((1, 4)), np.array([4]))

    def test_backward_finite_differences(self):
        rng = np.random.default_rng(11)
        logits = rng.normal(size=(5, 7))
        labels = rng.integers(0, 7, size=5)

        def loss():
            return cross_entropy(logits, labels)[0]

        _, grad = cross_entropy(logits, labels)
        assert rel_error(grad, fd_grad(loss, logits)) <= 1e-6

    def test_nonnegative(self):
        rng = np.random.default_rng(12)
        loss, _ = cross_entropy(rng.normal(size=(6, 9)), rng.integers(0, 9, 6))
        assert loss >= 0.0


def reference_adamw(values, grad_fn, lr, beta1, beta2, eps, wd, steps):
    """Independent AdamW oracle written against the update definition."""
    w = [v.copy() for v in values]
    m = [np.zeros_like(v) for v in values]
    v2 = [np.zeros_like(v) for v in values]
    for t in range(1, steps + 1):
        grads = grad_fn(w)
        for i in range(len(w)):
            m[i] = beta1 * m[i] + (1 - beta1) * grads[i]
            v2[i] = beta2 * v2[i] + (1 - beta2) * grads[i] ** 2
            mhat = m[i] / (1 - beta1 ** t)
            vhat = v2[i] / (1 - beta2 ** t)
            w[i] = w[i] - lr * (mhat / (np.sqrt(vhat) + eps) + wd * w[i])
    return w


class TestOptimizer:
    def test_schedule_endpoints(self):
        sched = Schedule(base_lr=0.1, warmup_steps=100, total_steps=1000)
        assert cosine_lr(0, sched) == 0.0
        assert cosine_lr(100, sched) == pytest.approx(0.1)
        assert cosine_lr(1000, sched) == pytest.approx(0.0, abs=1e-15)
        mid = cosine_lr(550, sched)
        assert 0.0 < mid < 0.1

    def test_descent_on_quadratic(self):
        p = Param("w", np.array([1.0]))
        opt = AdamW([p], lr=0.1)
        p.grad[...] = 2.0 * p.value  # d/dw of w^2
        opt.step()
        assert abs(p.value[0]) < 1.0

    def test_three_steps_match_reference(self):
        # f(w) = (w0 - 1)^2 + 2 * (w1 + 0.5)^2
        def grads(ws):
            w = ws[0]
            return [np.array([2 * (w[0] - 1.0), 4 * (w[1] + 0.5)])]

        start = [np.array([0.3, -0.1])]
        expect = reference_adamw(start, grads, lr=0.05, beta1=0.9, beta2=0.999,
                                 eps=1e-8, wd=0.01, steps=3)
        p = Param("w", start[0].copy())
        opt = AdamW([p], lr=0.05, beta1=0.9, beta2=0.999, eps=1e-8,
                    weight_decay=0.01)
        for _ in range(3):
            opt.zero_grad()
            p.grad[...] = grads([p.value])[0]
            opt.step()
        np.testing.assert_allclose(p.value, expect[0], rtol=0, atol=1e-12)

    def test_step_counter_increases(self):
        p = Param("w", np.zeros(2))
        opt = AdamW([p], lr=0.01)
        opt.step()
        opt.step()
        assert opt.step_count == 2


class TestGradCheck:
    def test_linear_layer_passes(self):
        rng = np.random.default_rng(13)
        w = Param("w", rng.normal(size=(3, 2)))
        b = Param("b", rng.normal(size=2))
        x = rng.normal(size=(4, 3))
        gy = rng.normal(size=(4, 2))

        def loss_fn():
            y = linear(x, w.value, b.value)
            _, gw, gb = linear_bwd(gy, x, w.value)
            return float((y * gy).sum()), {"w": gw, "b": gb}

        report = grad_check(loss_fn, [w, b], tolerance=1e-6)
        assert report.passed, report.worst()

    def test_detects_corrupted_gradient(self):
        rng = np.random.default_rng(14)
        w = Param("w", rng.normal(size=(3, 2)))
        x = rng.normal(size=(4, 3))
        gy = rng.normal(size=(4, 2))

        def loss_fn():
            y = linear(x, w.value, np.zeros(2))
            _, gw, _ = linear_bwd(gy, x, w.value)
            return float((y * gy).sum()), {"w": gw + 0.5}

        report = grad_check(loss_fn, [w], tolerance=1e-6)
        assert not report.passed
        assert report.max_rel_error > 1e-6

    def test_rejects_nondeterministic_fn(self):
        rng = np.random.default_rng(15)
        w = Param("w", np.ones(1))

        def loss_fn():
            return float(rng.normal()), {"w": np.zeros(1)}

        with pytest.raises(NumericsError):
            grad_check(loss_fn, [w])
