import zlib

import numpy as np
import pytest

from evpose import autodiff as ad
from evpose.errors import NumericError, ShapeError
from oracles import conv2d_loops as conv2d_loop_oracle


def fd_gradients(f, params, eps=1e-6):
    """Central finite differences of a scalar function, coordinate by coordinate."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f(params).data)
            flat[i] = orig - eps
            f_minus = float(f(params).data)
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2 * eps)
        grads.append(g)
    return grads


def assert_backward_matches_fd(f, params, rtol=1e-6, eps=1e-6):
    analytic = ad.backward(f(params), params=list(params))
    numeric = fd_gradients(f, params, eps=eps)
    for p, num in zip(params, numeric):
        ana = analytic[p]
        denom = np.maximum(np.abs(ana) + np.abs(num), 1e-4)
        assert np.all(np.abs(ana - num) / denom < rtol), f"mismatch:\n{ana}\n{num}"


class TestForwardValues:
    def test_matmul_hand_example(self):
        out = ad.matmul(ad.tensor([[1.0, 2.0], [3.0, 4.0]]), ad.tensor([[1.0], [1.0]]))
        assert out.data.tolist() == [[3.0], [7.0]]

    def test_sigmoid_tanh_at_origin(self):
        zero = ad.tensor(np.zeros(3))
        assert np.all(ad.sigmoid(zero).data == 0.5)
        assert np.all(ad.tanh(zero).data == 0.0)

    def test_dropout_inference_identity(self):
        x = ad.tensor(np.arange(12.0).reshape(3, 4))
        assert np.array_equal(ad.dropout(x, 0.5, training=False).data, x.data)

    def test_dropout_training_zeroes_and_scales(self):
        x = ad.tensor(np.ones(1000))
        y = ad.dropout(x, 0.25, training=True, seed=0).data
        assert set(np.unique(y)) == {0.0, 1.0 / 0.75}
        # drop probability close to the rate
        assert abs(np.mean(y == 0.0) - 0.25) < 0.05

    def test_dropout_mask_reproducible(self):
        x = ad.tensor(np.ones((7, 5)))
        a = ad.dropout(x, 0.5, training=True, seed=123).data
        b = ad.dropout(x, 0.5, training=True, seed=123).data
        c = ad.dropout(x, 0.5, training=True, seed=124).data
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_dropout_bad_rate(self):
        x = ad.tensor(np.ones(3))
        for rate in (-0.1, 1.0, 1.5):
            with pytest.raises(ValueError):
                ad.dropout(x, rate, training=True, seed=0)

    def test_shape_errors_name_kind_and_shapes(self):
        a = ad.tensor(np.ones((2, 3)))
        b = ad.tensor(np.ones((3, 2)))
        with pytest.raises(ShapeError, match="add.*2, 3"):
            ad.add(a, b)
        with pytest.raises(ShapeError, match="matmul"):
            ad.matmul(a, a)

    def test_conv2d_matches_loop_oracle_exactly_on_integers(self):
        # integer-valued inputs make float sums exact regardless of order
        rng = np.random.default_rng(0)
        for stride, padding in ((1, 0), (1, 1), (2, 1), (2, 0)):
            x = rng.integers(-3, 4, size=(2, 5, 5)).astype(float)
            w = rng.integers(-3, 4, size=(3, 2, 3, 3)).astype(float)
            b = rng.integers(-3, 4, size=3).astype(float)
            out = ad.conv2d(ad.tensor(x), ad.tensor(w), ad.tensor(b), stride, padding)
            oracle = conv2d_loop_oracle(x, w, b, stride, padding)
            assert np.array_equal(out.data, oracle)

    def test_conv2d_close_to_loop_oracle_on_floats(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 5, 5))
        w = rng.standard_normal((4, 2, 3, 3))
        b = rng.standard_normal(4)
        out = ad.conv2d(ad.tensor(x), ad.tensor(w), ad.tensor(b), 1, 1)
        assert np.allclose(out.data, conv2d_loop_oracle(x, w, b, 1, 1), atol=1e-12)

    def test_maxpool_values(self):
        x = ad.tensor(np.arange(16.0).reshape(1, 4, 4))
        out = ad.maxpool2d(x, 2)
        assert out.data.tolist() == [[[5.0, 7.0], [13.0, 15.0]]]

    def test_linear_pair_matches_composition(self):
        rng = np.random.default_rng(2)
        x = ad.tensor(rng.standard_normal((1, 5)))
        wx = ad.tensor(rng.standard_normal((5, 4)))
        h = ad.tensor(rng.standard_normal((1, 6)))
        wh = ad.tensor(rng.standard_normal((6, 4)))
        b = ad.tensor(rng.standard_normal((1, 4)))
        fused = ad.linear_pair(x, wx, h, wh, b)
        composed = ad.add(ad.add(ad.matmul(x, wx), ad.matmul(h, wh)), b)
        assert np.array_equal(fused.data, composed.data)

    def test_concat_and_slice(self):
        a = ad.tensor(np.arange(6.0).reshape(2, 3))
        b = ad.tensor(np.arange(6.0, 12.0).reshape(2, 3))
        cat = ad.concat([a, b], axis=0)
        assert cat.data.shape == (4, 3)
        sl = ad.slice_along(cat, axis=0, start=2, stop=4)
        assert np.array_equal(sl.data, b.data)


class TestBackward:
    def test_sum_of_squares_gradient(self):
        x = ad.parameter(np.full(3, 3.0))
        grads = ad.backward(ad.sum_all(ad.mul(x, x)), params=[x])
        assert np.array_equal(grads[x], np.full(3, 6.0))

    def test_l2norm_subgradient_zero_at_kink(self):
        x = ad.parameter(np.array([1.0, 2.0]))
        y = ad.parameter(np.array([1.0, 2.0]))
        grads = ad.backward(ad.l2norm(ad.sub(x, y)), params=[x, y])
        assert np.array_equal(grads[x], np.zeros(2))
        assert np.array_equal(grads[y], np.zeros(2))

    def test_matmul_sum_gradient_is_ones_bt(self):
        rng = np.random.default_rng(3)
        a = ad.parameter(rng.standard_normal((3, 4)))
        b_const = rng.standard_normal((4, 2))

        def f(params):
            return ad.sum_all(ad.matmul(params[0], ad.tensor(b_const)))

        grads = ad.backward(f([a]), params=[a])
        expected = np.ones((3, 2)) @ b_const.T
        assert np.allclose(grads[a], expected, atol=1e-12)
        numeric = fd_gradients(f, [a], eps=1e-5)[0]
        assert np.allclose(grads[a], numeric, atol=1e-8)

    def test_unreached_leaf_gets_zeros(self):
        x = ad.parameter(np.ones(2))
        unused = ad.parameter(np.ones(3))
        grads = ad.backward(ad.sum_all(x), params=[x, unused])
        assert np.array_equal(grads[unused], np.zeros(3))

    def test_non_scalar_output_rejected(self):
        x = ad.parameter(np.ones((2, 2)))
        with pytest.raises(ShapeError):
            ad.backward(ad.mul(x, x), params=[x])

    def test_reused_tensor_accumulates(self):
        x = ad.parameter(np.array([2.0]))
        # f = x*x + x -> grad 2x + 1 = 5
        out = ad.add(ad.mul(x, x), x)
        grads = ad.backward(ad.sum_all(out), params=[x])
        assert grads[x].tolist() == [5.0]

    @pytest.mark.parametrize(
        "name",
        [
            "add", "sub", "mul", "matmul", "conv2d", "sigmoid", "tanh", "relu",
            "reshape", "concat", "slice", "sum", "mean", "l2norm", "dropout",
            "maxpool", "linear_pair",
        ],
    )
    def test_op_backward_matches_central_differences(self, name):
        rng = np.random.default_rng(zlib.crc32(name.encode()))

        def randt(*shape):
            return ad.parameter(rng.standard_normal(shape))

        if name == "add":
            p = [randt(3, 4), randt(3, 4)]
            f = lambda ps: ad.sum_all(ad.add(ps[0], ps[1]))
        elif name == "sub":
            p = [randt(3, 4), randt(3, 4)]
            f = lambda ps: ad.sum_all(ad.mul(ad.sub(ps[0], ps[1]), ad.sub(ps[0], ps[1])))
        elif name == "mul":
            p = [randt(2, 5), randt(2, 5)]
            f = lambda ps: ad.sum_all(ad.mul(ps[0], ps[1]))
        elif name == "matmul":
            p = [randt(3, 4), randt(4, 2)]
            f = lambda ps: ad.l2norm(ad.matmul(ps[0], ps[1]))
        elif name == "conv2d":
            p = [randt(2, 5, 5), randt(3, 2, 3, 3), randt(3)]
            f = lambda ps: ad.l2norm(ad.conv2d(ps[0], ps[1], ps[2], 1, 1))
        elif name == "sigmoid":
            p = [randt(4, 3)]
            f = lambda ps: ad.sum_all(ad.sigmoid(ps[0]))
        elif name == "tanh":
            p = [randt(4, 3)]
            f = lambda ps: ad.sum_all(ad.tanh(ps[0]))
        elif name == "relu":
            # keep inputs away from the kink at 0
            p = [ad.parameter(rng.uniform(0.5, 2.0, (3, 3)) * rng.choice([-1, 1], (3, 3)))]
            f = lambda ps: ad.sum_all(ad.relu(ps[0]))
        elif name == "reshape":
            p = [randt(2, 6)]
            f = lambda ps: ad.l2norm(ad.reshape(ps[0], (3, 4)))
        elif name == "concat":
            p = [randt(2, 3), randt(2, 3)]
            f = lambda ps: ad.l2norm(ad.concat(ps, axis=1))
        elif name == "slice":
            p = [randt(4, 4)]
            f = lambda ps: ad.l2norm(ad.slice_along(ps[0], axis=1, start=1, stop=3))
        elif name == "sum":
            p = [randt(5)]
            f = lambda ps: ad.sum_all(ps[0])
        elif name == "mean":
            p = [randt(2, 7)]
            f = lambda ps: ad.mean_all(ad.mul(ps[0], ps[0]))
        elif name == "l2norm":
            p = [ad.parameter(rng.standard_normal(6) + 3.0)]  # away from 0
            f = lambda ps: ad.l2norm(ps[0])
        elif name == "dropout":
            p = [randt(3, 5)]
            f = lambda ps: ad.sum_all(ad.dropout(ps[0], 0.4, training=True, seed=7))
        elif name == "maxpool":
            p = [randt(2, 4, 4)]
            f = lambda ps: ad.l2norm(ad.maxpool2d(ps[0], 2))
        elif name == "linear_pair":
            p = [randt(1, 3), randt(3, 4), randt(1, 5), randt(5, 4), randt(1, 4)]
            f = lambda ps: ad.l2norm(ad.linear_pair(*ps))
        assert_backward_matches_fd(f, p)


class TestGradCheck:
    def test_quadratic_is_nearly_exact(self):
        x = ad.parameter(np.array([1.0, -2.0, 0.5]))
        err = ad.grad_check(lambda ps: ad.sum_all(ad.mul(ps[0], ps[0])), [x], eps=1e-4)
        assert err < 1e-9

    def test_constant_function_zero_error(self):
        x = ad.parameter(np.ones(3))
        err = ad.grad_check(lambda ps: ad.tensor(np.asarray(5.0)), [x], eps=1e-4)
        assert err == 0.0

    def test_bad_eps(self):
        x = ad.parameter(np.ones(2))
        with pytest.raises(ValueError):
            ad.grad_check(lambda ps: ad.sum_all(ps[0]), [x], eps=0.0)


class TestSgd:
    def test_tiny_weight_decay_step(self):
        p = ad.parameter(np.array([1.0]))
        state = ad.make_opt_state([p], lr=1e-5, momentum=0.9, weight_decay=1e-6)
        ad.sgd_step([p], {p: np.zeros(1)}, state)
        assert p.data[0] == 1.0 - 1e-11

    def test_vanilla_step(self):
        p = ad.parameter(np.array([2.0]))
        state = ad.make_opt_state([p], lr=0.1, momentum=0.0, weight_decay=0.0)
        ad.sgd_step([p], {p: np.ones(1)}, state)
        assert p.data[0] == pytest.approx(1.9)

    def test_two_momentum_steps(self):
        # v1 = 1, theta1 = -1; v2 = 0.9 + 1 = 1.9, theta2 = -2.9
        p = ad.parameter(np.zeros(1))
        state = ad.make_opt_state([p], lr=1.0, momentum=0.9, weight_decay=0.0)
        for _ in range(2):
            ad.sgd_step([p], {p: np.ones(1)}, state)
        assert p.data[0] == pytest.approx(-2.9)

    def test_zero_lr_is_bit_identical(self):
        rng = np.random.default_rng(8)
        p = ad.parameter(rng.standard_normal((5, 5)))
        before = p.data.copy()
        state = ad.make_opt_state([p], lr=0.0, momentum=0.9, weight_decay=1e-6)
        for _ in range(3):
            ad.sgd_step([p], {p: rng.standard_normal((5, 5))}, state)
        assert np.array_equal(p.data, before)

    def test_non_finite_gradient_aborts(self):
        p = ad.parameter(np.ones(3))
        state = ad.make_opt_state([p], lr=0.1, momentum=0.0, weight_decay=0.0)
        with pytest.raises(NumericError):
            ad.sgd_step([p], {p: np.array([1.0, np.nan, 0.0])}, state)
