"""Tests for the reverse-mode differentiation engine.

Every primitive gets its analytic backward pass compared against central
finite differences through ``grad_check``; a handful of closed-form cases
pin exact values.
"""

import numpy as np
import pytest

from cascade_qa import autodiff as ad
from cascade_qa.autodiff import ParameterStore, ShapeError, Tensor

TOL = 1e-4


def leaf(rng, shape, scale=1.0):
    return Tensor(rng.normal(size=shape) * scale, requires_grad=True)


def check(loss_fn, params, **kwargs):
    return ad.grad_check(loss_fn, params, **kwargs)


class TestForwardSemantics:
    def test_softmax_uniform(self):
        out = ad.softmax(Tensor(np.array([0.0, 0.0])))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_relu_negative(self):
        assert ad.relu(Tensor(np.array(-1.0))).item() == 0.0

    def test_matmul_shape(self):
        out = ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 1))))
        assert out.shape == (2, 1)

    def test_matmul_shape_error_names_primitive(self):
        with pytest.raises(ShapeError, match="matmul"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_masked_softmax_zero_at_masked(self):
        logits = Tensor(np.array([1.0, 2.0, 3.0]))
        mask = np.array([True, False, True])
        out = ad.softmax(logits, mask=mask)
        assert out.data[1] == 0.0
        assert out.data.sum() == pytest.approx(1.0, abs=1e-12)

    def test_fully_masked_row_rejected(self):
        with pytest.raises(ShapeError):
            ad.softmax(Tensor(np.zeros((2, 2))), mask=np.array([[True, True], [False, False]]))

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        out = ad.softmax(Tensor(rng.normal(size=(5, 7)) * 10))
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)

    def test_forward_determinism(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 4))
        a = ad.tanh(ad.matmul(Tensor(x), Tensor(x))).data
        b = ad.tanh(ad.matmul(Tensor(x), Tensor(x))).data
        assert np.array_equal(a, b)


class TestBackwardBasics:
    def test_square_gradient(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        ad.backward(ad.square(x))
        assert x.grad == pytest.approx(6.0)

    def test_sigmoid_gradient_at_zero(self):
        x = Tensor(np.array(0.0), requires_grad=True)
        ad.backward(ad.sigmoid(x))
        assert x.grad == pytest.approx(0.25)

    def test_reuse_accumulates(self):
        x = Tensor(np.array(1.0), requires_grad=True)
        ad.backward(x + x)
        assert x.grad == pytest.approx(2.0)

    def test_non_scalar_loss_rejected(self):
        x = Tensor(np.zeros(3), requires_grad=True)
        with pytest.raises(ShapeError):
            ad.backward(x + x)

    def test_constant_loss_zero_gradients(self):
        x = Tensor(np.array(2.0), requires_grad=True)

        def loss_fn():
            return Tensor(np.array(5.0)) + 0.0 * x

        err = check(loss_fn, {"x": x})
        assert err == 0.0


class TestPrimitiveGradients:
    """Finite-difference verification, one primitive at a time."""

    def test_elementwise_and_linear(self):
        rng = np.random.default_rng(10)
        a = leaf(rng, (3, 4))
        b = leaf(rng, (3, 4))
        c = leaf(rng, (4, 2))
        v = leaf(rng, (4,))

        cases = {
            "add": lambda: ad.reduce_sum(ad.square(a + b)),
            "sub": lambda: ad.reduce_sum(ad.square(a - b)),
            "mul": lambda: ad.reduce_sum(ad.square(a * b)),
            "matmul_mm": lambda: ad.reduce_sum(ad.square(ad.matmul(a, c))),
            "matmul_mv": lambda: ad.reduce_sum(ad.square(ad.matmul(a, v))),
            "matmul_vm": lambda: ad.reduce_sum(ad.square(ad.matmul(v, c))),
            "matmul_vv": lambda: ad.square(ad.matmul(v, v)),
        }
        params = {"a": a, "b": b, "c": c, "v": v}
        for name, fn in cases.items():
            assert check(fn, params) <= TOL, name

    def test_broadcasting_gradients(self):
        rng = np.random.default_rng(11)
        m = leaf(rng, (3, 4))
        row_bias = leaf(rng, (4,))
        scalar = leaf(rng, ())

        def fn():
            return ad.reduce_sum(ad.square(m + row_bias * scalar))

        assert check(fn, {"m": m, "row": row_bias, "s": scalar}) <= TOL

    def test_nonlinearities(self):
        rng = np.random.default_rng(12)
        x = leaf(rng, (5,))
        positive = Tensor(np.abs(rng.normal(size=5)) + 0.5, requires_grad=True)
        cases = {
            "sigmoid": lambda: ad.reduce_sum(ad.square(ad.sigmoid(x))),
            "tanh": lambda: ad.reduce_sum(ad.square(ad.tanh(x))),
            "relu": lambda: ad.reduce_sum(ad.square(ad.relu(x))),
            "exp": lambda: ad.reduce_sum(ad.square(ad.exp(x))),
            "softplus": lambda: ad.reduce_sum(ad.square(ad.softplus(x))),
            "log": lambda: ad.reduce_sum(ad.square(ad.log(positive))),
        }
        for name, fn in cases.items():
            assert check(fn, {"x": x, "p": positive}) <= TOL, name

    def test_softmax_family(self):
        rng = np.random.default_rng(13)
        x = leaf(rng, (3, 5))
        mask = rng.random((3, 5)) > 0.3
        mask[:, 0] = True

        cases = {
            "softmax": lambda: ad.reduce_sum(ad.square(ad.softmax(x))),
            "softmax_masked": lambda: ad.reduce_sum(ad.square(ad.softmax(x, mask=mask))),
            "log_softmax": lambda: ad.reduce_sum(ad.square(ad.log_softmax(x))),
        }
        for name, fn in cases.items():
            assert check(fn, {"x": x}) <= TOL, name

    def test_shape_ops(self):
        rng = np.random.default_rng(14)
        x = leaf(rng, (4, 3))
        y = leaf(rng, (2, 3))
        vec = leaf(rng, (6,))

        cases = {
            "concat": lambda: ad.reduce_sum(ad.square(ad.concat([x, y], axis=0))),
            "slice": lambda: ad.reduce_sum(ad.square(ad.slice_axis(x, 1, 3))),
            "row": lambda: ad.reduce_sum(ad.square(ad.row(x, 2))),
            "take": lambda: ad.square(ad.take(vec, 3)),
            "reshape": lambda: ad.reduce_sum(ad.square(ad.reshape(x, (2, 6)))),
            "broadcast": lambda: ad.reduce_sum(ad.square(ad.broadcast_to(vec, (3, 6)))),
            "transpose": lambda: ad.reduce_sum(ad.square(ad.transpose(x))),
            "stack_rows": lambda: ad.reduce_sum(ad.square(ad.stack_rows([ad.row(x, 0), ad.row(x, 1)]))),
        }
        for name, fn in cases.items():
            assert check(fn, {"x": x, "y": y, "v": vec}) <= TOL, name

    def test_reductions(self):
        rng = np.random.default_rng(15)
        x = leaf(rng, (4, 5))
        cases = {
            "sum_all": lambda: ad.square(ad.reduce_sum(x)),
            "sum_axis": lambda: ad.reduce_sum(ad.square(ad.reduce_sum(x, axis=0))),
            "mean_all": lambda: ad.square(ad.reduce_mean(x)),
            "mean_axis": lambda: ad.reduce_sum(ad.square(ad.reduce_mean(x, axis=1))),
            "max_all": lambda: ad.square(ad.reduce_max(x)),
            "max_axis": lambda: ad.reduce_sum(ad.square(ad.reduce_max(x, axis=0))),
        }
        for name, fn in cases.items():
            assert check(fn, {"x": x}) <= TOL, name

    def test_gather(self):
        rng = np.random.default_rng(16)
        table = leaf(rng, (7, 3))
        ids = np.array([0, 3, 3, 6])

        def fn():
            return ad.reduce_sum(ad.square(ad.gather(table, ids)))

        assert check(fn, {"t": table}) <= TOL

    def test_lstm_cell(self):
        rng = np.random.default_rng(17)
        d, h = 4, 3
        params = {
            "xh": leaf(rng, (d + h,)),
            "c": leaf(rng, (h,)),
            "w": leaf(rng, (d + h, 4 * h), scale=0.4),
            "b": leaf(rng, (4 * h,), scale=0.2),
        }

        def fn():
            return ad.reduce_sum(ad.square(ad.lstm_cell(params["xh"], params["c"], params["w"], params["b"])))

        assert check(fn, params) <= TOL

    def test_char_conv_max(self):
        rng = np.random.default_rng(18)
        params = {
            "emb": leaf(rng, (6, 3)),
            "f": leaf(rng, (15, 4), scale=0.4),
            "b": leaf(rng, (4,), scale=0.2),
        }

        def fn():
            return ad.reduce_sum(ad.square(ad.char_conv_max(params["emb"], params["f"], params["b"], width=5)))

        assert check(fn, params) <= TOL


class TestLstmSequence:
    def test_zero_weights_zero_states(self):
        t, d, h = 3, 2, 4
        x = Tensor(np.zeros((t, d)))
        w = Tensor(np.zeros((d + h, 4 * h)))
        b = Tensor(np.zeros(4 * h))
        out = ad.lstm_sequence(x, w, b, w, b)
        np.testing.assert_array_equal(out.data, np.zeros((t, 2 * h)))

    def test_length_one_bidirectional(self):
        rng = np.random.default_rng(20)
        d, h = 3, 2
        x = Tensor(rng.normal(size=(1, d)))
        w = Tensor(rng.normal(size=(d + h, 4 * h)) * 0.4)
        b = Tensor(rng.normal(size=4 * h) * 0.2)
        out = ad.lstm_sequence(x, w, b, w, b)
        assert out.shape == (1, 2 * h)
        # same parameters, same single step: both directions agree
        np.testing.assert_allclose(out.data[0, :h], out.data[0, h:])

    def test_empty_sequence_rejected(self):
        with pytest.raises(ShapeError):
            ad.lstm_sequence(Tensor(np.zeros((0, 3))), Tensor(np.zeros((7, 16))), Tensor(np.zeros(16)))

    def test_gradients(self):
        rng = np.random.default_rng(21)
        t, d, h = 4, 3, 3
        params = {
            "x": leaf(rng, (t, d)),
            "wf": leaf(rng, (d + h, 4 * h), scale=0.4),
            "bf": leaf(rng, (4 * h,), scale=0.2),
            "wb": leaf(rng, (d + h, 4 * h), scale=0.4),
            "bb": leaf(rng, (4 * h,), scale=0.2),
        }

        def fn():
            out = ad.lstm_sequence(params["x"], params["wf"], params["bf"], params["wb"], params["bb"])
            return ad.reduce_sum(ad.square(out))

        assert check(fn, params) <= TOL


class TestCharCnnEmbed:
    def test_zero_filters_zero_output(self):
        table = Tensor(np.ones((5, 3)))
        filters = Tensor(np.zeros((15, 4)))
        bias = Tensor(np.zeros(4))
        out = ad.char_cnn_embed(np.array([1, 2]), table, filters, bias)
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_output_size_independent_of_word_length(self):
        rng = np.random.default_rng(22)
        table = Tensor(rng.normal(size=(9, 3)))
        filters = Tensor(rng.normal(size=(15, 6)))
        bias = Tensor(rng.normal(size=6))
        for length in (1, 2, 5, 11):
            ids = rng.integers(0, 9, size=length)
            assert ad.char_cnn_embed(ids, table, filters, bias).shape == (6,)

    def test_empty_word_zero_vector(self):
        table = Tensor(np.ones((5, 3)))
        filters = Tensor(np.ones((15, 4)))
        bias = Tensor(np.ones(4))
        out = ad.char_cnn_embed(np.array([], dtype=np.int64), table, filters, bias)
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_gradients(self):
        rng = np.random.default_rng(23)
        params = {
            "table": leaf(rng, (8, 3)),
            "filters": leaf(rng, (15, 4), scale=0.4),
            "bias": leaf(rng, (4,), scale=0.2),
        }
        ids = np.array([0, 5, 2, 7])

        def fn():
            out = ad.char_cnn_embed(ids, params["table"], params["filters"], params["bias"])
            return ad.reduce_sum(ad.square(out))

        assert check(fn, params) <= TOL


class TestParameterStore:
    def test_duplicate_name_rejected(self):
        store = ParameterStore()
        store.add("w", np.zeros(2))
        with pytest.raises(ValueError):
            store.add("w", np.zeros(2))

    def test_snapshot_and_load(self):
        store = ParameterStore()
        store.add("w", np.arange(3.0))
        snap = store.snapshot()
        store["w"].data += 1.0
        store.load_arrays(snap)
        np.testing.assert_array_equal(store["w"].data, np.arange(3.0))

    def test_load_shape_mismatch(self):
        store = ParameterStore()
        store.add("w", np.zeros(3))
        with pytest.raises(ShapeError):
            store.load_arrays({"w": np.zeros(4)})

    def test_names_sorted(self):
        store = ParameterStore()
        store.add("b", np.zeros(1))
        store.add("a", np.zeros(1))
        assert store.names() == ["a", "b"]


class TestNoGrad:
    def test_no_graph_recorded(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        with ad.no_grad():
            y = ad.square(x)
        assert y._backward is None and not y.requires_grad

    def test_values_still_computed(self):
        x = Tensor(np.array(2.0), requires_grad=True)
        with ad.no_grad():
            assert ad.square(x).item() == 4.0
