"""Autograd engine, Adam, and the finite-difference oracle."""

import numpy as np
import pytest

from nmprot import numcore as nc
from nmprot.errors import DegenerateRow, NumericalError, ShapeError


def _rand(rng, *shape):
    return nc.parameter(rng.normal(size=shape))


class TestMatmul:
    def test_identity(self):
        m = nc.constant(np.arange(9.0).reshape(3, 3))
        out = nc.matmul(nc.constant(np.eye(3)), m)
        np.testing.assert_array_equal(out.data, m.data)

    def test_hand_case(self):
        a = nc.constant(np.array([[1.0, 2.0], [3.0, 4.0]]))
        b = nc.constant(np.array([[0.0], [1.0]]))
        np.testing.assert_array_equal(nc.matmul(a, b).data, [[2.0], [4.0]])

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(0)
        a, b = _rand(rng, 5, 4), _rand(rng, 4, 3)
        ref = np.zeros((5, 3))
        for i in range(5):
            for j in range(3):
                for k in range(4):
                    ref[i, j] += a.data[i, k] * b.data[k, j]
        np.testing.assert_allclose(nc.matmul(a, b).data, ref, atol=1e-6)

    def test_shape_mismatch(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ShapeError):
            nc.matmul(_rand(rng, 2, 3), _rand(rng, 4, 2))

    def test_transpose_b_gradients(self):
        rng = np.random.default_rng(3)
        a, b = _rand(rng, 4, 3), _rand(rng, 5, 3)

        def f(tape):
            return nc.sum_all(nc.matmul(a, b, tape, transpose_b=True), tape)

        report = nc.finite_diff_check(f, [a, b])
        assert report.max_rel_error < 1e-6


class TestSoftmaxRows:
    def test_uniform_on_zero_row(self):
        out = nc.softmax_rows(nc.constant(np.zeros((1, 4))))
        np.testing.assert_array_equal(out.data, np.full((1, 4), 0.25))

    def test_no_overflow_on_large_logits(self):
        out = nc.softmax_rows(nc.constant(np.array([[1000.0, 0.0]])))
        assert np.isfinite(out.data).all()
        np.testing.assert_allclose(out.data, [[1.0, 0.0]], atol=1e-12)

    def test_masked_renormalizes(self):
        mask = np.array([[True, False, True]])
        out = nc.softmax_rows(nc.constant(np.zeros((1, 3))), mask=mask)
        np.testing.assert_array_equal(out.data, [[0.5, 0.0, 0.5]])

    def test_masked_entries_exactly_zero(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            r, c = rng.integers(1, 6), rng.integers(2, 8)
            x = nc.constant(rng.normal(size=(r, c)) * 3)
            mask = rng.random((r, c)) < 0.6
            mask[:, 0] = True
            out = nc.softmax_rows(x, mask=mask).data
            assert (out[~mask] == 0.0).all()
            np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)

    def test_fully_masked_row_raises(self):
        with pytest.raises(DegenerateRow):
            nc.softmax_rows(nc.constant(np.zeros((2, 3))),
                            mask=np.array([[True] * 3, [False] * 3]))

    def test_gradient(self):
        rng = np.random.default_rng(2)
        x = _rand(rng, 3, 4)
        target = rng.normal(size=(3, 4))

        def f(tape):
            return nc.mse_masked(nc.softmax_rows(x, tape=tape), target, tape=tape)

        assert nc.finite_diff_check(f, [x]).max_rel_error < 1e-6


class TestMeanPoolRows:
    def test_identical_rows(self):
        v = np.array([1.0, -2.0, 3.0])
        m = nc.constant(np.tile(v, (4, 1)))
        np.testing.assert_allclose(nc.mean_pool_rows(m).data, v)

    def test_two_scalar_rows(self):
        out = nc.mean_pool_rows(nc.constant(np.array([[1.0], [3.0]])))
        np.testing.assert_array_equal(out.data, [2.0])

    def test_masked_equals_sliced(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            m, d = rng.integers(2, 9), rng.integers(1, 6)
            x = rng.normal(size=(m, d))
            mask = rng.random(m) < 0.5
            if not mask.any():
                mask[0] = True
            pooled = nc.mean_pool_rows(nc.constant(x), row_mask=mask).data
            np.testing.assert_allclose(pooled, x[mask].mean(axis=0), atol=1e-12)

    def test_no_valid_rows_raises(self):
        with pytest.raises(DegenerateRow):
            nc.mean_pool_rows(nc.constant(np.ones((2, 3))), row_mask=np.zeros(2, bool))


class TestBackward:
    def test_sum_gives_ones(self):
        rng = np.random.default_rng(4)
        w = _rand(rng, 3, 5)
        tape = nc.GradientTape()
        loss = nc.sum_all(w, tape)
        (g,) = tape.gradients(loss, [w])
        np.testing.assert_array_equal(g, np.ones((3, 5)))

    def test_mse_closed_form(self):
        rng = np.random.default_rng(5)
        x = _rand(rng, 7)
        tape = nc.GradientTape()
        loss = nc.mse_masked(nc.reshape(x, (1, 7), tape), np.zeros((1, 7)), tape=tape)
        (g,) = tape.gradients(loss, [x])
        np.testing.assert_allclose(g, 2.0 * x.data / 7, atol=1e-12)

    def test_backward_returns_identity_keyed_map(self):
        rng = np.random.default_rng(11)
        w = _rand(rng, 2, 2)
        tape = nc.GradientTape()
        loss = nc.sum_all(w, tape)
        grads = nc.backward(loss, tape, [w])
        np.testing.assert_array_equal(grads[w], np.ones((2, 2)))

    def test_empty_tape_zero_gradients(self):
        w = nc.parameter(np.ones((2, 2)))
        tape = nc.GradientTape()
        loss = nc.constant(np.asarray(1.0))
        (g,) = tape.gradients(loss, [w])
        np.testing.assert_array_equal(g, np.zeros((2, 2)))

    def test_non_scalar_loss_raises(self):
        w = nc.parameter(np.ones(3))
        tape = nc.GradientTape()
        out = nc.scale(w, 2.0, tape)
        with pytest.raises(ShapeError):
            tape.gradients(out, [w])

    def test_shared_parameter_accumulates(self):
        rng = np.random.default_rng(6)
        w = _rand(rng, 3, 3)
        x1, x2 = nc.constant(rng.normal(size=(3, 3))), nc.constant(rng.normal(size=(3, 3)))

        def loss_with(mat, tape):
            return nc.sum_all(nc.matmul(w, mat, tape), tape)

        tape = nc.GradientTape()
        both = nc.add(loss_with(x1, tape), loss_with(x2, tape), tape)
        (g_both,) = tape.gradients(both, [w])

        t1, t2 = nc.GradientTape(), nc.GradientTape()
        (g1,) = t1.gradients(loss_with(x1, t1), [w])
        (g2,) = t2.gradients(loss_with(x2, t2), [w])
        np.testing.assert_allclose(g_both, g1 + g2, atol=1e-12)

    def test_random_compositions_match_fd(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            p = _rand(rng, 4, 5)
            q = _rand(rng, 5, 3)
            mask = rng.random((4, 3)) < 0.7
            mask[:, 0] = True
            target = rng.normal(size=(4, 3))
            row_mask = rng.random(4) < 0.8
            row_mask[0] = True

            def f(tape):
                z = nc.matmul(p, q, tape)
                a = nc.softmax_rows(z, mask=mask, tape=tape)
                pooled = nc.mean_pool_rows(nc.tanh(a, tape), row_mask=row_mask, tape=tape)
                s1 = nc.mse_masked(a, target, mask=mask, tape=tape)
                s2 = nc.mse_masked(
                    nc.reshape(pooled, (1, 3), tape), np.zeros((1, 3)), tape=tape
                )
                return nc.add(s1, nc.scale(s2, 0.5, tape), tape)

            report = nc.finite_diff_check(f, [p, q])
            assert report.max_rel_error < 1e-4, f"trial {trial}: {report}"


class TestFiniteDiff:
    def test_quadratic(self):
        x = nc.parameter(np.asarray([3.0]))

        def f(tape):
            x2 = nc.reshape(x, (1, 1), tape)
            return nc.mse_masked(x2, np.zeros((1, 1)), tape=tape)

        report = nc.finite_diff_check(f, [x], h=1e-6)
        assert report.max_rel_error < 1e-8

    def test_constant_function(self):
        x = nc.parameter(np.ones(4))

        def f(tape):
            return nc.constant(np.asarray(2.0))

        report = nc.finite_diff_check(f, [x])
        assert report.max_rel_error == 0.0

    def test_nonfinite_raises(self):
        x = nc.parameter(np.asarray([0.0]))

        def f(tape):
            return nc.constant(np.asarray(np.inf))

        with pytest.raises(NumericalError):
            nc.finite_diff_check(f, [x])


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = nc.parameter(np.array([1.0, -2.0]))
        state = nc.AdamState.for_params([p])
        nc.adam_step([p], [np.zeros(2)], state)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])
        assert state.t == 1

    def test_constant_gradient_descends(self):
        p = nc.parameter(np.asarray([0.0]))
        state = nc.AdamState.for_params([p], lr=1e-2)
        for _ in range(100):
            nc.adam_step([p], [np.asarray([0.7])], state)
        assert p.data[0] < -0.5
        assert state.t == 100

    def test_first_step_matches_hand_formula(self):
        lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
        g = 0.37
        p = nc.parameter(np.asarray([2.0]))
        state = nc.AdamState.for_params([p], lr=lr, beta1=b1, beta2=b2, eps=eps)
        nc.adam_step([p], [np.asarray([g])], state)
        m = (1 - b1) * g
        v = (1 - b2) * g * g
        m_hat = m / (1 - b1)
        v_hat = v / (1 - b2)
        expected = 2.0 - lr * m_hat / (np.sqrt(v_hat) + eps)
        np.testing.assert_allclose(p.data[0], expected, rtol=1e-12)

    def test_shape_mismatch(self):
        p = nc.parameter(np.ones(3))
        state = nc.AdamState.for_params([p])
        with pytest.raises(ShapeError):
            nc.adam_step([p], [np.ones(4)], state)


class TestFiniteInputs:
    def test_no_nan_on_bounded_inputs(self):
        from nmprot.numcore import engine

        old = engine.CHECK_FINITE
        engine.CHECK_FINITE = True
        try:
            rng = np.random.default_rng(8)
            for _ in range(30):
                x = nc.constant(rng.uniform(-1e3, 1e3, size=(4, 6)))
                w = nc.constant(rng.uniform(-1e3, 1e3, size=(6, 3)))
                z = nc.matmul(x, w)
                a = nc.softmax_rows(z)
                nc.mean_pool_rows(nc.tanh(a))
                nc.relu(z)
        finally:
            engine.CHECK_FINITE = old
