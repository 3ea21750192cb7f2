import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edgeward import autodiff as ad
from edgeward.autodiff import (
    Tensor2,
    add,
    backward,
    binarize_st,
    cross_entropy,
    diag_scale,
    hadamard,
    load_checkpoint,
    make_optimizer,
    matmul,
    optimizer_step,
    powf,
    relu,
    save_checkpoint,
    scale,
    select_rows,
    sigmoid,
    softmax_rows,
    sum_all,
    sum_rows,
    tensor,
    transpose,
    zero_grad,
)
from oracles import check_gradients


class TestTensorType:
    def test_shape_fields(self):
        t = tensor(np.zeros((2, 3)))
        assert t.rows == 2 and t.cols == 3

    def test_non_2d_rejected(self):
        with pytest.raises(ValueError, match="2-D"):
            tensor(np.zeros(3))

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            tensor(np.array([[np.inf, 0.0]]))

    def test_item_needs_scalar(self):
        with pytest.raises(ValueError):
            tensor(np.zeros((2, 2))).item()


class TestForwardSemantics:
    def test_relu_values(self):
        out = relu(tensor(np.array([[-1.0, 0.0, 2.0]])))
        assert out.value.tolist() == [[0.0, 0.0, 2.0]]

    def test_hadamard_with_all_ones_is_identity(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((4, 4))
        out = hadamard(tensor(np.ones((4, 4))), tensor(h))
        assert np.array_equal(out.value, h)

    def test_softmax_uniform_on_equal_logits(self):
        out = softmax_rows(tensor(np.array([[0.0, 0.0]])))
        assert np.allclose(out.value, [[0.5, 0.5]])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        out = softmax_rows(tensor(rng.standard_normal((5, 7)) * 30.0))
        assert np.all(np.abs(out.value.sum(axis=1) - 1.0) < 1e-12)

    def test_sigmoid_open_interval(self):
        out = sigmoid(tensor(np.array([[-800.0, 0.0, 800.0]])))
        v = out.value
        assert np.all(v > 0.0) and np.all(v < 1.0) and v[0, 1] == 0.5

    def test_matmul_shape_error_names_shapes(self):
        with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(tensor(np.zeros((2, 3))), tensor(np.zeros((2, 3))))

    def test_diag_scale_matches_diag_matmul(self):
        rng = np.random.default_rng(2)
        d = rng.standard_normal((1, 4))
        m = rng.standard_normal((4, 3))
        out = diag_scale(tensor(d), tensor(m))
        assert np.allclose(out.value, np.diag(d[0]) @ m)

    def test_select_rows_gather(self):
        m = np.arange(12.0).reshape(4, 3)
        out = select_rows(tensor(m), [2, 0])
        assert out.value.tolist() == [[6.0, 7.0, 8.0], [0.0, 1.0, 2.0]]

    def test_binarize_rule(self):
        a = np.array([[1.0, 0.0], [0.0, 1.0]])
        o = tensor(np.array([[2.0, 0.0], [0.5, 0.5]]))
        out = binarize_st(o, a)
        # entry is 0 where a >= o, else 1
        assert out.value.tolist() == [[1.0, 0.0], [1.0, 0.0]]

    def test_forward_deterministic(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((6, 6))
        r1 = softmax_rows(relu(tensor(x))).value
        r2 = softmax_rows(relu(tensor(x.copy()))).value
        assert np.array_equal(r1, r2)


class TestCrossEntropy:
    def test_confident_correct_is_near_zero(self):
        p = tensor(np.array([[1.0, 0.0, 0.0]]))
        t = np.array([[1.0, 0.0, 0.0]])
        assert cross_entropy(p, t).item() == 0.0

    def test_half_half(self):
        p = tensor(np.array([[0.5, 0.5]]))
        t = np.array([[1.0, 0.0]])
        assert abs(cross_entropy(p, t).item() - math.log(2.0)) < 1e-15

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(4)
        logits = rng.standard_normal((6, 4))
        p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
        labels = rng.integers(0, 4, size=6)
        t = np.zeros((6, 4))
        t[np.arange(6), labels] = 1.0
        got = cross_entropy(tensor(p), t).item()
        want = -sum(math.log(p[i, labels[i]]) for i in range(6))
        assert abs(got - want) < 1e-12

    def test_not_one_hot_rejected(self):
        p = tensor(np.array([[0.5, 0.5]]))
        with pytest.raises(ValueError, match="one-hot"):
            cross_entropy(p, np.array([[0.5, 0.5]]))
        with pytest.raises(ValueError, match="one-hot"):
            cross_entropy(p, np.array([[1.0, 1.0]]))

    def test_clamp_avoids_inf(self):
        p = tensor(np.array([[0.0, 1.0]]))
        t = np.array([[1.0, 0.0]])
        loss = cross_entropy(p, t).item()
        assert np.isfinite(loss) and abs(loss - -math.log(1e-12)) < 1e-6


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = tensor(np.zeros((2, 2)), requires_grad=True)
        backward(sum_all(x))
        assert np.array_equal(x.grad, np.ones((2, 2)))

    def test_hadamard_square_gradient(self):
        x = tensor(np.array([[1.0, 2.0]]), requires_grad=True)
        backward(sum_all(hadamard(x, x)))
        assert np.allclose(x.grad, [[2.0, 4.0]])

    def test_non_scalar_loss_rejected(self):
        x = tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            backward(add(x, x))

    def test_repeated_backward_accumulates(self):
        x = tensor(np.array([[3.0]]), requires_grad=True)
        loss = sum_all(hadamard(x, x))
        backward(loss)
        backward(loss)
        assert np.allclose(x.grad, [[12.0]])

    def test_shared_subexpression_fanout(self):
        # y = x*x reused twice: d(sum(y)+sum(y))/dx = 4x
        x = tensor(np.array([[2.0]]), requires_grad=True)
        y = hadamard(x, x)
        backward(add(sum_all(y), sum_all(y)))
        assert np.allclose(x.grad, [[8.0]])

    def test_no_grad_constants_untouched(self):
        c = tensor(np.ones((2, 2)))
        x = tensor(np.ones((2, 2)), requires_grad=True)
        backward(sum_all(matmul(x, c)))
        assert c.grad is None

    def test_straight_through_binarize(self):
        o = tensor(np.array([[0.7, 0.2]]), requires_grad=True)
        a = np.array([[1.0, 0.0]])
        backward(sum_all(binarize_st(o, a)))
        assert np.array_equal(o.grad, np.ones((1, 2)))


def rand_t(rng, shape, scale_=1.0):
    return tensor(scale_ * rng.standard_normal(shape), requires_grad=True)


class TestGradientsAgainstFiniteDifferences:
    """Every differentiable op, random inputs, central differences."""

    def test_matmul(self, rng):
        a, b = rand_t(rng, (3, 4)), rand_t(rng, (4, 2))
        check_gradients(lambda: sum_all(matmul(a, b)), [a, b])

    def test_hadamard(self, rng):
        a, b = rand_t(rng, (3, 3)), rand_t(rng, (3, 3))
        check_gradients(lambda: sum_all(hadamard(a, b)), [a, b])

    def test_add_scale(self, rng):
        a, b = rand_t(rng, (2, 5)), rand_t(rng, (2, 5))
        check_gradients(lambda: sum_all(add(scale(a, 2.5), b)), [a, b])

    def test_transpose(self, rng):
        a = rand_t(rng, (2, 4))
        w = tensor(rng.standard_normal((2, 4)))
        check_gradients(lambda: sum_all(hadamard(transpose(a), transpose(w))), [a])

    def test_relu(self, rng):
        a = rand_t(rng, (4, 4))
        # keep entries away from the kink
        a.value[np.abs(a.value) < 0.05] += 0.1
        check_gradients(lambda: sum_all(relu(a)), [a])

    def test_sigmoid(self, rng):
        a = rand_t(rng, (3, 3))
        check_gradients(lambda: sum_all(hadamard(sigmoid(a), sigmoid(a))), [a])

    def test_softmax(self, rng):
        a = rand_t(rng, (3, 5))
        w = tensor(rng.standard_normal((3, 5)))
        check_gradients(lambda: sum_all(hadamard(softmax_rows(a), w)), [a])

    def test_diag_scale(self, rng):
        d, m = rand_t(rng, (1, 4)), rand_t(rng, (4, 3))
        check_gradients(lambda: sum_all(diag_scale(d, m)), [d, m])

    def test_select_rows_with_duplicates(self, rng):
        a = rand_t(rng, (5, 3))
        w = tensor(rng.standard_normal((3, 3)))
        check_gradients(lambda: sum_all(matmul(select_rows(a, [0, 2, 0]), w)), [a])

    def test_sum_rows(self, rng):
        a = rand_t(rng, (4, 3))
        w = tensor(rng.standard_normal((4, 1)))
        check_gradients(lambda: sum_all(hadamard(sum_rows(a), w)), [a])

    def test_powf(self, rng):
        a = tensor(rng.random((3, 3)) + 0.5, requires_grad=True)
        check_gradients(lambda: sum_all(powf(a, -0.5)), [a])

    def test_cross_entropy_through_softmax(self, rng):
        a = rand_t(rng, (4, 3))
        t = np.zeros((4, 3))
        t[np.arange(4), rng.integers(0, 3, 4)] = 1.0
        check_gradients(lambda: cross_entropy(softmax_rows(a), t), [a])

    def test_cross_entropy_through_sigmoid(self, rng):
        a = rand_t(rng, (2, 4))
        t = np.zeros((2, 4))
        t[[0, 1], [1, 3]] = 1.0
        check_gradients(lambda: cross_entropy(sigmoid(a), t), [a])

    def test_deep_composite(self, rng):
        # exercise fanout, reuse, and mixed ops in one graph
        w1 = rand_t(rng, (4, 6), 0.5)
        w2 = rand_t(rng, (6, 3), 0.5)
        d = rand_t(rng, (1, 4), 0.5)
        x = tensor(rng.standard_normal((5, 4)))
        t = np.zeros((5, 3))
        t[np.arange(5), rng.integers(0, 3, 5)] = 1.0

        def loss():
            h = relu(matmul(transpose(diag_scale(d, transpose(x))), w1))
            out = softmax_rows(matmul(h, w2))
            reg = scale(add(sum_all(hadamard(w1, w1)), sum_all(hadamard(w2, w2))), 5e-4)
            return add(cross_entropy(out, t), reg)

        check_gradients(loss, [w1, w2, d])


class TestOptimizer:
    def test_sgd_step(self):
        p = tensor(np.array([[1.0]]), requires_grad=True)
        opt = make_optimizer("sgd", lr=0.1)
        optimizer_step(opt, [p], [np.array([[2.0]])])
        assert np.allclose(p.value, [[0.8]])

    def test_adam_first_step_closed_form(self):
        p = tensor(np.array([[3.0]]), requires_grad=True)
        opt = make_optimizer("adam", lr=0.01)
        optimizer_step(opt, [p], [np.array([[1.0]])])
        assert abs(p.value[0, 0] - (3.0 - 0.01 * (1.0 / (1.0 + 1e-8)))) < 1e-15

    def test_zero_gradient_noop(self):
        p_s = tensor(np.array([[2.0]]), requires_grad=True)
        optimizer_step(make_optimizer("sgd", lr=0.5), [p_s])
        assert p_s.value[0, 0] == 2.0
        p_a = tensor(np.array([[2.0]]), requires_grad=True)
        optimizer_step(make_optimizer("adam", lr=0.5), [p_a], [np.zeros((1, 1))])
        assert abs(p_a.value[0, 0] - 2.0) <= 1e-12

    def test_step_counter_monotone(self):
        p = tensor(np.array([[0.0]]), requires_grad=True)
        opt = make_optimizer("adam", lr=0.01)
        for k in range(1, 4):
            optimizer_step(opt, [p], [np.array([[1.0]])])
            assert opt.step_count == k

    def test_shape_mismatch_rejected(self):
        p = tensor(np.zeros((2, 2)), requires_grad=True)
        with pytest.raises(ValueError, match="shape"):
            optimizer_step(make_optimizer("sgd", lr=0.1), [p], [np.zeros((1, 2))])

    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ValueError, match="optimizer"):
            make_optimizer("rmsprop", lr=0.1)

    def test_adam_descends_quadratic(self):
        p = tensor(np.array([[5.0]]), requires_grad=True)
        opt = make_optimizer("adam", lr=0.1)
        for _ in range(200):
            zero_grad([p])
            backward(sum_all(hadamard(p, p)))
            optimizer_step(opt, [p])
        assert abs(p.value[0, 0]) < 0.1


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        params = {
            "w1": tensor(rng.standard_normal((3, 4)) * 1e-7),
            "w2": rng.standard_normal((2, 2)) * 1e9,
            "theta": np.array([[math.pi, 1.0 / 3.0]]),
        }
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, params)
        loaded = load_checkpoint(path)
        assert set(loaded) == set(params)
        for name, v in params.items():
            arr = v.value if isinstance(v, Tensor2) else v
            assert np.array_equal(loaded[name], arr), name

    def test_17_digit_decimals(self, tmp_path):
        path = tmp_path / "c.json"
        save_checkpoint(path, {"x": np.array([[1.0 / 3.0]])})
        text = path.read_text()
        assert "0.33333333333333331" in text

    def test_bad_entry_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text('{"x": {"rows": 2, "cols": 2, "data": [1.0]}}')
        with pytest.raises(ValueError, match="checkpoint"):
            load_checkpoint(path)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
def test_softmax_rows_property(xs):
    out = softmax_rows(tensor(np.array([xs])))
    assert abs(out.value.sum() - 1.0) < 1e-12
    assert np.all(out.value > 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 10_000))
def test_matmul_matches_numpy_property(n, m, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((n, m)), rng.standard_normal((m, n))
    assert np.allclose(matmul(tensor(a), tensor(b)).value, a @ b, atol=1e-12)
