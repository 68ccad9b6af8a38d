import numpy as np
import pytest

import cohdet.autodiff as ad
from cohdet.autodiff import (NotScalarRoot, ShapeMismatch, Tape, backward,
                             finite_difference_check, leaf)


def fresh(arr):
    return leaf(Tape(), np.asarray(arr, dtype=float))


class TestForwardOps:
    def test_matmul_identity(self):
        tape = Tape()
        x = leaf(tape, [[1.0, 2.0], [3.0, 4.0]])
        eye = leaf(tape, np.eye(2))
        np.testing.assert_array_equal(ad.matmul(eye, x).data, x.data)

    def test_softmax_symmetry(self):
        out = ad.softmax_rows(fresh([[0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])

    def test_relu(self):
        np.testing.assert_array_equal(ad.relu(fresh([[-1.0, 2.0]])).data,
                                      [[0.0, 2.0]])

    def test_shape_mismatch(self):
        tape = Tape()
        a = leaf(tape, np.zeros((2, 3)))
        b = leaf(tape, np.zeros((2, 2)))
        with pytest.raises(ShapeMismatch):
            ad.matmul(a, b)
        with pytest.raises(ShapeMismatch):
            ad.add(a, b)

    def test_bias_row_broadcast(self):
        tape = Tape()
        a = leaf(tape, np.ones((3, 2)))
        b = leaf(tape, [[1.0, -1.0]])
        out = ad.add(a, b)
        np.testing.assert_array_equal(out.data, [[2.0, 0.0]] * 3)

    def test_softmax_rows_sum_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(5, 7))
        out = ad.softmax_rows(fresh(x)).data
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
        shifted = ad.softmax_rows(fresh(x + 123.456)).data
        np.testing.assert_allclose(out, shifted, atol=1e-12)

    def test_l2_normalize_rows(self):
        rng = np.random.default_rng(1)
        out = ad.l2_normalize_rows(fresh(rng.normal(size=(4, 6)))).data
        np.testing.assert_allclose((out * out).sum(axis=1), 1.0, atol=1e-12)

    def test_leaf_rejects_non_finite(self):
        with pytest.raises(ValueError):
            fresh([[np.inf, 0.0]])

    def test_concat_and_take_row(self):
        tape = Tape()
        a = leaf(tape, [[1.0, 2.0]])
        b = leaf(tape, [[3.0, 4.0]])
        rows = ad.concat_rows([a, b])
        np.testing.assert_array_equal(rows.data, [[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(ad.take_row(rows, 1).data, [[3.0, 4.0]])
        cols = ad.concat_cols([a, b])
        np.testing.assert_array_equal(cols.data, [[1.0, 2.0, 3.0, 4.0]])


class TestBackward:
    def test_square_scalar(self):
        tape = Tape()
        x = leaf(tape, [[3.0]])
        backward(ad.mul(x, x))
        np.testing.assert_allclose(x.grad, [[6.0]])

    def test_relu_subgradient_zero_on_negative(self):
        tape = Tape()
        x = leaf(tape, [[-1.0, 2.0]])
        backward(ad.sum_all(ad.relu(x)))
        np.testing.assert_array_equal(x.grad, [[0.0, 1.0]])

    def test_grad_accumulates_over_reuse(self):
        tape = Tape()
        x = leaf(tape, [[2.0]])
        backward(ad.add(ad.mul(x, x), ad.scale(x, 3.0)))  # x^2 + 3x
        np.testing.assert_allclose(x.grad, [[7.0]])

    def test_root_must_be_scalar(self):
        tape = Tape()
        x = leaf(tape, [[1.0, 2.0]])
        with pytest.raises(NotScalarRoot):
            backward(ad.relu(x))

    def test_backward_deterministic(self):
        def run():
            tape = Tape()
            x = leaf(tape, [[0.3, -0.7], [1.1, 0.2]])
            w = leaf(tape, [[0.5, -0.2], [0.1, 0.9]])
            out = ad.mean_all(ad.tanh(ad.matmul(ad.sigmoid(x), w)))
            backward(out)
            return x.grad.tobytes(), w.grad.tobytes()

        assert run() == run()


def composed_network(leaves):
    """Touches every op the encoder and losses rely on."""
    x, w1, w2, b = leaves["x"], leaves["w1"], leaves["w2"], leaves["b"]
    h = ad.relu(ad.add(ad.matmul(x, w1), b))
    h = ad.softmax_rows(ad.matmul(h, w2))
    h = ad.l2_normalize_rows(h)
    s = ad.sigmoid(ad.mean_rows(h))
    t = ad.tanh(ad.take_row(x, 0))
    mixed = ad.concat_cols([s, t])
    q = ad.exp(ad.scale(mixed, 0.3))
    return ad.mean_all(ad.log(ad.add_scalar(ad.mul(q, q), 1.0)))


class TestFiniteDifferences:
    def test_linear_function_near_machine_precision(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(3, 4))

        def f(leaves):
            return ad.sum_all(ad.mul(leaves["x"], leaf(leaves["x"].tape, w)))

        err = finite_difference_check(f, {"x": rng.normal(size=(3, 4))})
        assert err < 1e-9

    def test_exp_at_zero(self):
        def f(leaves):
            return ad.sum_all(ad.exp(leaves["x"]))

        err = finite_difference_check(f, {"x": np.zeros((1, 1))}, epsilon=1e-5)
        assert err < 1e-8

    def test_relu_kink_is_skipped(self):
        # x[0,0] sits exactly on the kink; its (ill-defined) difference
        # quotient must not be scored
        def f(leaves):
            return ad.sum_all(ad.relu(leaves["x"]))

        err = finite_difference_check(f, {"x": np.array([[0.0, 2.0]])})
        assert err < 1e-9

    def test_composed_network_matches(self):
        rng = np.random.default_rng(7)
        params = {
            "x": rng.normal(size=(3, 5)),
            "w1": rng.normal(size=(5, 4)),
            "w2": rng.normal(size=(4, 4)),
            "b": rng.normal(size=(1, 4)),
        }
        err = finite_difference_check(composed_network, params, epsilon=1e-5)
        assert err < 1e-4

    def test_division_and_dot(self):
        rng = np.random.default_rng(9)

        def f(leaves):
            a, b = leaves["a"], leaves["b"]
            ratio = ad.div(a, ad.add_scalar(ad.mul(b, b), 1.0))
            return ad.dot(ratio, b)

        params = {"a": rng.normal(size=(1, 6)), "b": rng.normal(size=(1, 6))}
        assert finite_difference_check(f, params) < 1e-4

    def test_clip_passthrough_gradient(self):
        tape = Tape()
        x = leaf(tape, [[0.5, 2.0, -3.0]])
        backward(ad.sum_all(ad.clip(x, 0.0, 1.0)))
        np.testing.assert_array_equal(x.grad, [[1.0, 0.0, 0.0]])
