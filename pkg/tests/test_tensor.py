import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import t32
from spinalgalaxy import (AdamState, Tape, Tensor, adam_step, add, backward, concat,
                          conv2d, grad_check, matmul, maxpool2, mul, relu, scale,
                          softmax_cross_entropy_mean, tensor_sum)
from spinalgalaxy.errors import ContractError, DimensionError, OracleError


def reference_matmul(a, b):
    """Triple-loop oracle."""
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += float(a[i, p]) * float(b[p, j])
    return out


def reference_conv(x, k, bias):
    """Direct sliding-window oracle, valid padding, stride 1."""
    co, ci, kh, kw = k.shape
    _, h, w = x.shape
    out = np.zeros((co, h - kh + 1, w - kw + 1), dtype=np.float64)
    for o in range(co):
        for i in range(h - kh + 1):
            for j in range(w - kw + 1):
                acc = float(bias[o])
                for c in range(ci):
                    for di in range(kh):
                        for dj in range(kw):
                            acc += float(x[c, i + di, j + dj]) * float(k[o, c, di, dj])
                out[o, i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        a = t32([[1, 2], [3, 4]])
        out = matmul(a, t32(np.eye(2)))
        assert out.data.tolist() == [[1, 2], [3, 4]]

    def test_against_reference(self):
        a = np.array([[1, 2], [3, 4]], dtype=np.float32)
        b = np.array([[5, 6], [7, 8]], dtype=np.float32)
        expected = reference_matmul(a, b)
        assert expected.tolist() == [[19, 22], [43, 50]]
        assert matmul(t32(a), t32(b)).data.tolist() == expected.tolist()

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
            matmul(t32(np.zeros((2, 3))), t32(np.zeros((4, 5))))

    def test_random_against_reference(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(-1, 1, (3, 5)).astype(np.float32)
        b = rng.uniform(-1, 1, (5, 4)).astype(np.float32)
        np.testing.assert_allclose(matmul(t32(a), t32(b)).data,
                                   reference_matmul(a, b), rtol=1e-5, atol=1e-6)


class TestConv2d:
    def test_all_ones(self):
        x = t32(np.ones((1, 3, 3)))
        k = t32(np.ones((1, 1, 3, 3)))
        out = conv2d(x, k, t32([0.0]))
        assert out.shape == (1, 1, 1)
        expected = reference_conv(x.data, k.data, np.zeros(1))
        assert expected[0, 0, 0] == 9.0
        assert out.data[0, 0, 0] == 9.0

    def test_delta_kernel_center_crop(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 1, (1, 5, 5)).astype(np.float32)
        k = np.zeros((1, 1, 3, 3), dtype=np.float32)
        k[0, 0, 1, 1] = 1.0
        out = conv2d(t32(x), t32(k), t32([0.0]))
        np.testing.assert_array_equal(out.data[0], x[0, 1:4, 1:4])

    def test_kernel_larger_than_input(self):
        with pytest.raises(DimensionError, match="larger than input"):
            conv2d(t32(np.zeros((1, 3, 3))), t32(np.zeros((1, 1, 4, 4))), t32([0.0]))

    def test_random_against_reference(self):
        rng = np.random.default_rng(6)
        x = rng.uniform(-1, 1, (2, 5, 6)).astype(np.float32)
        k = rng.uniform(-1, 1, (3, 2, 3, 3)).astype(np.float32)
        b = rng.uniform(-1, 1, 3).astype(np.float32)
        out = conv2d(t32(x), t32(k), t32(b))
        np.testing.assert_allclose(out.data, reference_conv(x, k, b), rtol=1e-4, atol=1e-5)

    def test_batched_matches_per_sample(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-1, 1, (4, 2, 6, 6)).astype(np.float32)
        k = t32(rng.uniform(-1, 1, (3, 2, 3, 3)))
        b = t32(rng.uniform(-1, 1, 3))
        batched = conv2d(t32(x), k, b)
        for i in range(4):
            single = conv2d(t32(x[i]), k, b)
            np.testing.assert_allclose(batched.data[i], single.data, rtol=1e-5, atol=1e-6)


class TestMaxpool2:
    def test_single_window(self):
        out = maxpool2(t32([[[1, 2], [3, 4]]]))
        assert out.shape == (1, 1, 1)
        assert out.data[0, 0, 0] == 4.0

    def test_tie_routes_gradient_to_first_position(self):
        x = t32(np.ones((1, 2, 2)), requires_grad=True)
        with Tape() as tape:
            loss = tensor_sum(maxpool2(x))
            backward(loss, tape)
        assert x.grad.tolist() == [[[1, 0], [0, 0]]]

    def test_odd_extent(self):
        with pytest.raises(DimensionError, match="even"):
            maxpool2(t32(np.zeros((1, 3, 2))))

    def test_constant_input(self):
        out = maxpool2(t32(np.full((2, 4, 4), 7.0)))
        assert (out.data == 7.0).all()


class TestRelu:
    def test_sign_cases(self):
        assert relu(t32([-1, 0, 2])).data.tolist() == [0, 0, 2]

    def test_dead_region_zero_gradient(self):
        x = t32([-1.0, -2.0], requires_grad=True)
        with Tape() as tape:
            loss = tensor_sum(relu(x))
            backward(loss, tape)
        assert loss.data[0] == 0.0
        assert x.grad.tolist() == [0, 0]

    def test_identity_region_passes_gradient(self):
        x = t32([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = tensor_sum(relu(x))
            backward(loss, tape)
        assert x.grad.tolist() == [1, 1]


class TestConcat:
    def test_single_part(self):
        a = t32([[1, 2, 3], [4, 5, 6]])
        np.testing.assert_array_equal(concat([a]).data, a.data)

    def test_layout(self):
        out = concat([t32([[1], [2]]), t32([[3, 4], [5, 6]])])
        assert out.shape == (2, 3)
        assert out.data[:, 0].tolist() == [1, 2]

    def test_leading_extent_mismatch(self):
        with pytest.raises(DimensionError, match="leading"):
            concat([t32(np.zeros((2, 1))), t32(np.zeros((3, 1)))])

    def test_backward_splits_by_offsets(self):
        a = t32([[1.0, 2.0]], requires_grad=True)
        b = t32([[3.0]], requires_grad=True)
        with Tape() as tape:
            loss = tensor_sum(mul(concat([a, b]), t32([[10.0, 20.0, 30.0]])))
            backward(loss, tape)
        assert a.grad.tolist() == [[10, 20]]
        assert b.grad.tolist() == [[30]]


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        loss = softmax_cross_entropy_mean(t32(np.zeros((3, 10))), [0, 5, 9])
        assert loss.data[0] == pytest.approx(math.log(10), abs=1e-6)

    def test_two_logit_closed_form(self):
        # loss = ln(1 + e^-1) for logits [0, 1] and target 1
        expected = math.log(1.0 + math.exp(-1.0))
        assert expected == pytest.approx(0.313262, abs=5e-7)
        loss = softmax_cross_entropy_mean(t32([[0.0, 1.0]]), [1])
        assert loss.data[0] == pytest.approx(expected, abs=1e-6)

    def test_dominant_target_logit(self):
        loss = softmax_cross_entropy_mean(t32([[1000.0, 0.0, 0.0]]), [0])
        assert abs(loss.data[0]) <= 1e-6

    def test_out_of_range_target(self):
        with pytest.raises(IndexError):
            softmax_cross_entropy_mean(t32(np.zeros((2, 3))), [0, 3])
        with pytest.raises(IndexError):
            softmax_cross_entropy_mean(t32(np.zeros((2, 3))), [-1, 0])

    @given(st.integers(0, 10))
    @settings(max_examples=20, deadline=None)
    def test_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.uniform(-5, 5, (4, 6)).astype(np.float32)
        targets = rng.integers(0, 6, 4).tolist()
        assert softmax_cross_entropy_mean(t32(logits), targets).data[0] >= 0.0

    def test_constant_rows_give_log_c(self):
        logits = np.full((2, 4), 3.25, dtype=np.float32)
        loss = softmax_cross_entropy_mean(t32(logits), [1, 3])
        assert loss.data[0] == pytest.approx(math.log(4), abs=1e-6)

    def test_nonconstant_rows_deviate_from_log_c(self):
        rng = np.random.default_rng(11)
        logits = rng.uniform(-2, 2, (3, 4)).astype(np.float32)
        loss = softmax_cross_entropy_mean(t32(logits), [0, 1, 2])
        assert abs(loss.data[0] - math.log(4)) > 1e-4

    def test_backward_is_softmax_minus_onehot_over_batch(self):
        logits = t32([[0.5, -0.5], [1.0, 2.0]], requires_grad=True)
        with Tape() as tape:
            loss = softmax_cross_entropy_mean(logits, [0, 1])
            backward(loss, tape)
        z = logits.data.astype(np.float64)
        p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
        p[[0, 1], [0, 1]] -= 1.0
        np.testing.assert_allclose(logits.grad, p / 2.0, rtol=1e-5, atol=1e-7)


class TestBackward:
    def test_sum_gives_ones(self):
        x = t32(np.arange(12).reshape(3, 4), requires_grad=True)
        with Tape() as tape:
            backward(tensor_sum(x), tape)
        assert (x.grad == 1.0).all()

    def test_half_sum_of_squares_gives_x(self):
        rng = np.random.default_rng(2)
        x = t32(rng.uniform(-2, 2, (2, 3)), requires_grad=True)
        with Tape() as tape:
            loss = scale(tensor_sum(mul(x, x)), 0.5)
            backward(loss, tape)
        np.testing.assert_allclose(x.grad, x.data, rtol=1e-6)

    def test_fan_out_adds_branch_gradients(self):
        rng = np.random.default_rng(4)
        xv = rng.uniform(-1, 1, (3, 3)).astype(np.float32)
        wa = t32(rng.uniform(-1, 1, (3, 2)))
        wb = t32(rng.uniform(-1, 1, (3, 2)))

        x = t32(xv, requires_grad=True)
        with Tape() as tape:
            loss = add(tensor_sum(matmul(x, wa)), tensor_sum(matmul(x, wb)))
            backward(loss, tape)

        # duplicated-leaf construction: one leaf per branch
        x1 = t32(xv, requires_grad=True)
        x2 = t32(xv, requires_grad=True)
        with Tape() as tape:
            loss = add(tensor_sum(matmul(x1, wa)), tensor_sum(matmul(x2, wb)))
            backward(loss, tape)
        np.testing.assert_array_equal(x.grad, x1.grad + x2.grad)

    def test_non_scalar_loss_rejected(self):
        x = t32([[1.0, 2.0]], requires_grad=True)
        with Tape() as tape:
            y = relu(x)
            with pytest.raises(ContractError, match="scalar"):
                backward(y, tape)


class TestPurity:
    def test_repeated_forward_is_bit_identical(self):
        rng = np.random.default_rng(9)
        x = t32(rng.uniform(-1, 1, (2, 6, 6)))
        k = t32(rng.uniform(-1, 1, (3, 2, 3, 3)))
        b = t32(rng.uniform(-1, 1, 3))
        first = conv2d(x, k, b)
        second = conv2d(x, k, b)
        assert first.data.tobytes() == second.data.tobytes()
        a = t32(rng.uniform(-1, 1, (4, 5)))
        w = t32(rng.uniform(-1, 1, (5, 3)))
        assert matmul(a, w).data.tobytes() == matmul(a, w).data.tobytes()


class TestAdam:
    def test_zero_gradients_leave_params_unchanged(self):
        p = t32([1.0, -2.0], requires_grad=True)
        p.grad = np.zeros(2, dtype=np.float32)
        state = AdamState.for_params([p])
        before = p.data.copy()
        adam_step([p], state)
        np.testing.assert_array_equal(p.data, before)
        assert state.step_count == 1
        assert p.grad is None

    def test_first_step_closed_form(self):
        # bias correction makes the first update -lr * g / (|g| + eps)
        p = t32([3.0], requires_grad=True)
        p.grad = np.array([0.5], dtype=np.float32)
        state = AdamState.for_params([p])
        adam_step([p], state)
        expected = 3.0 - 1e-3 * 0.5 / (math.sqrt(0.5 ** 2) + 1e-8)
        assert p.data[0] == pytest.approx(expected, rel=1e-6)
        assert p.data[0] == pytest.approx(3.0 - 1e-3, rel=1e-5)

    def test_two_identical_runs_bit_identical(self):
        def run():
            rng = np.random.default_rng(42)
            p = t32(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
            state = AdamState.for_params([p])
            for step in range(5):
                p.grad = rng.standard_normal((4, 3)).astype(np.float32)
                adam_step([p], state)
            return p.data.tobytes()

        assert run() == run()

    def test_missing_gradient_rejected(self):
        p = t32([1.0], requires_grad=True)
        with pytest.raises(ContractError, match="grad"):
            adam_step([p], AdamState.for_params([p]))

    def test_state_size_mismatch_rejected(self):
        p = t32([1.0, 2.0], requires_grad=True)
        p.grad = np.zeros(2, dtype=np.float32)
        with pytest.raises(ContractError, match="state"):
            adam_step([p], AdamState(np.zeros(5, np.float32), np.zeros(5, np.float32)))


class TestGradCheck:
    def test_exact_linearity(self):
        # values and step on a 2^-10 grid keep float32 sums exact
        rng = np.random.default_rng(1)
        x = t32(rng.integers(-512, 512, (4, 5)).astype(np.float32) / 1024.0)
        assert grad_check(tensor_sum, x, 2.0 ** -10) <= 1e-6

    def test_softmax_ce_of_matmul(self):
        rng = np.random.default_rng(12)
        x = t32(rng.uniform(-1, 1, (4, 5)))
        w = t32(rng.uniform(-1, 1, (5, 3)))
        err = grad_check(lambda v: softmax_cross_entropy_mean(matmul(v, w), [0, 1, 2, 0]),
                         x, 1e-3)
        assert err <= 1e-3

    def test_zero_step_rejected(self):
        with pytest.raises(ContractError, match="step"):
            grad_check(tensor_sum, t32([1.0]), 0.0)

    def test_detects_non_determinism(self):
        calls = []

        def noisy(v):
            calls.append(1)
            return scale(tensor_sum(v), 1.0 + 1e-3 * len(calls))

        with pytest.raises(OracleError, match="deterministic"):
            grad_check(noisy, t32([1.0, 2.0]), 1e-3)
