"""Autograd engine, layers, gradient checker, optimizer and checkpoints."""
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lsc_asr import autograd as ag
from lsc_asr import checkpoint
from lsc_asr.autograd import DimensionError, Tensor
from lsc_asr.gradcheck import check_gradients, check_store_gradients, relative_error
from lsc_asr.layers import (
    EmptySequenceError,
    ParameterStore,
    bidirectional_encoder,
    init_blstmp,
    init_linear,
    init_lstm,
    linear,
    lstm_cell,
    lstm_step,
)
from lsc_asr.optim import SGD, Adam, sgd_step


def np_sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def reference_lstm(x, h, c, W, b):
    """Plain per-gate LSTM written out separately from the fused op."""
    n = len(h)
    z = W @ np.concatenate([x, h]) + b
    i, f, g, o = z[:n], z[n:2 * n], z[2 * n:3 * n], z[3 * n:]
    c2 = np_sigmoid(f) * c + np_sigmoid(i) * np.tanh(g)
    return np_sigmoid(o) * np.tanh(c2), c2


class TestTensorOps:
    def test_broadcast_add_gradient_shapes(self):
        a = Tensor(np.ones((3, 4)), requires_grad=True)
        b = Tensor(np.ones(4), requires_grad=True)
        ag.sum(a + b).backward()
        np.testing.assert_array_equal(b.grad, np.full(4, 3.0))
        np.testing.assert_array_equal(a.grad, np.ones((3, 4)))

    def test_gradients_accumulate_over_reuse(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        ag.sum(x * x + x).backward()
        np.testing.assert_allclose(x.grad, [5.0])

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with ag.no_grad():
            y = ag.tanh(x) * 2.0
        assert not y.requires_grad

    def test_softmax_symmetric_and_stable(self):
        np.testing.assert_allclose(ag.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
        p = ag.softmax(Tensor([1000.0, 0.0])).data
        assert np.all(np.isfinite(p))
        np.testing.assert_allclose(p, [1.0, 0.0], atol=1e-300)
        lp = ag.log_softmax(Tensor([1000.0, 0.0])).data
        np.testing.assert_allclose(lp, [0.0, -1000.0])

    @settings(max_examples=30)
    @given(hnp.arrays(np.float64, (4,), elements=st.floats(-50, 50)))
    def test_softmax_sums_to_one(self, x):
        p = ag.softmax(Tensor(x)).data
        assert abs(p.sum() - 1.0) < 1e-12 and np.all(p >= 0)

    def test_logc_values(self):
        np.testing.assert_allclose(ag.logc(Tensor([0.0, np.e - 1, 1 - np.e])).data, [0, 1, 1])

    def test_logc_subgradient_at_zero(self):
        x = Tensor(np.array([0.0, 0.5, -0.5]), requires_grad=True)
        ag.sum(ag.logc(x)).backward()
        np.testing.assert_allclose(x.grad, [0.0, 1 / 1.5, -1 / 1.5])

    def test_matmul_shape_error(self):
        with pytest.raises((DimensionError, ValueError)):
            ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    @pytest.mark.parametrize("seed", [0, 1, 2])
    @pytest.mark.parametrize("op", [
        ag.tanh, ag.sigmoid, ag.softmax, ag.log_softmax,
        lambda x: ag.mean(x, axis=0), lambda x: ag.transpose(x),
        lambda x: ag.stack([x[0], x[1] * x[2]]), lambda x: ag.concat([x, ag.tanh(x)], axis=0),
        lambda x: ag.reshape(x, (-1,)), lambda x: ag.log(x * x + 1.0),
    ])
    def test_finite_differences(self, op, seed):
        x = np.random.default_rng(seed).normal(size=(3, 4))
        assert check_gradients(op, [x], seed=seed) < 1e-6

    def test_take_rows_scatter(self):
        E = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
        ag.sum(ag.take_rows(E, [2, 0, 2])).backward()
        np.testing.assert_array_equal(E.grad, [[1, 1], [0, 0], [2, 2]])


class TestLinear:
    def test_identity(self):
        s = ParameterStore()
        s.add("l.weight", np.eye(2))
        s.add("l.bias", np.zeros(2))
        np.testing.assert_array_equal(linear(Tensor([1.0, 2.0]), s, "l").data, [1, 2])

    def test_scalar_affine(self):
        s = ParameterStore()
        s.add("l.weight", [[2.0]])
        s.add("l.bias", [3.0])
        np.testing.assert_array_equal(linear(Tensor([4.0]), s, "l").data, [11.0])

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_gradient(self, seed):
        rng = np.random.default_rng(seed)
        W, b, x = rng.normal(size=(3, 5)), rng.normal(size=3), rng.normal(size=(2, 5))
        err = check_gradients(lambda w, bb, xx: ag.matmul(xx, ag.transpose(w)) + bb, [W, b, x])
        assert err < 1e-6

    def test_shape_mismatch(self):
        s = ParameterStore()
        init_linear(s, "l", 3, 2)
        with pytest.raises(DimensionError, match="'l'"):
            linear(Tensor(np.ones(4)), s, "l")


class TestLSTM:
    def test_zero_fixed_point(self):
        s = ParameterStore()
        init_lstm(s, "c", 3, 4)
        s["c.W"].data[:] = 0.0
        h, c = lstm_step(Tensor(np.ones(3)), (Tensor(np.zeros(4)), Tensor(np.zeros(4))), s, "c")
        np.testing.assert_array_equal(h.data, np.zeros(4))

    def test_hand_set_gates(self):
        # i -> 1, f -> 0, o -> 1: c' = tanh(0.7 x), h' = tanh(tanh(0.7 x))
        W = np.array([[100.0, 0.0], [-100.0, 0.0], [0.7, 0.0], [100.0, 0.0]])
        hc = lstm_cell(Tensor([1.0]), Tensor([0.3]), Tensor([5.0]), Tensor(W), Tensor(np.zeros(4)))
        np.testing.assert_allclose(hc.data, [np.tanh(np.tanh(0.7)), np.tanh(0.7)], atol=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_reference(self, seed):
        rng = np.random.default_rng(seed)
        x, h, c = rng.normal(size=3), rng.normal(size=4), rng.normal(size=4)
        W, b = rng.normal(size=(16, 7)), rng.normal(size=16)
        hc = lstm_cell(Tensor(x), Tensor(h), Tensor(c), Tensor(W), Tensor(b)).data
        h2, c2 = reference_lstm(x, h, c, W, b)
        np.testing.assert_allclose(hc, np.concatenate([h2, c2]), rtol=1e-13, atol=1e-15)

    @pytest.mark.parametrize("seed", range(3))
    def test_three_chained_steps_gradient(self, seed):
        rng = np.random.default_rng(seed)
        xs = rng.normal(size=(3, 2))

        def chain(W, b):
            h, c = Tensor(np.zeros(3)), Tensor(np.zeros(3))
            for t in range(3):
                hc = lstm_cell(Tensor(xs[t]), h, c, W, b)
                h, c = hc[:3], hc[3:]
            return h

        err = check_gradients(chain, [rng.normal(size=(12, 5)), rng.normal(size=12)], seed=seed)
        assert err < 1e-5

    def test_bad_shapes(self):
        with pytest.raises(DimensionError):
            lstm_cell(np.ones(2), np.ones(3), np.ones(3), np.ones((12, 4)), np.ones(12))


class TestEncoder:
    def test_zero_weights(self):
        s = ParameterStore()
        init_blstmp(s, "enc", 5, [(4, 3)])
        for name in s.names():
            s[name].data[:] = 0.0
        out = bidirectional_encoder(Tensor(np.ones((6, 5))), s, "enc", 1)
        assert out.shape == (6, 3)
        assert not np.any(out.data)

    def test_single_frame(self):
        s = ParameterStore(1)
        init_blstmp(s, "enc", 5, [(4, 3), (4, 2)])
        assert bidirectional_encoder(Tensor(np.ones((1, 5))), s, "enc", 2).shape == (1, 2)

    def test_backward_direction_sees_future(self):
        s = ParameterStore(2)
        init_blstmp(s, "enc", 2, [(3, 3)])
        x = np.random.default_rng(0).normal(size=(4, 2))
        a = bidirectional_encoder(Tensor(x), s, "enc", 1).data
        x2 = x.copy()
        x2[3] += 1.0
        b = bidirectional_encoder(Tensor(x2), s, "enc", 1).data
        assert not np.allclose(a[0], b[0])

    def test_empty_sequence(self):
        s = ParameterStore()
        init_blstmp(s, "enc", 2, [(3, 3)])
        with pytest.raises(EmptySequenceError):
            bidirectional_encoder(Tensor(np.zeros((0, 2))), s, "enc", 1)

    @pytest.mark.parametrize("seed", range(3))
    def test_gradient(self, seed):
        s = ParameterStore(seed)
        init_blstmp(s, "enc", 8, [(3, 4)])
        x = np.random.default_rng(seed).normal(size=(4, 8))
        w = np.random.default_rng(seed + 10).normal(size=(4, 4))
        err = check_store_gradients(lambda: ag.sum(bidirectional_encoder(Tensor(x), s, "enc", 1) * w),
                                    s, max_coords=20, seed=seed)
        assert err < 1e-5
        assert check_gradients(lambda t: bidirectional_encoder(t, s, "enc", 1), [x], seed=seed) < 1e-5


class TestGradientChecker:
    def test_linear_op_is_exact(self):
        A = np.random.default_rng(0).normal(size=(3, 3))
        assert check_gradients(lambda x: ag.matmul(A, x), [np.ones(3)]) < 1e-8

    def test_logc_at_half(self):
        assert check_gradients(ag.logc, [np.array([0.5])]) < 1e-6

    def test_detects_wrong_gradient(self):
        def bad(x):
            return ag._make(x.data ** 2, (x,), lambda g: (g * x.data,))  # should be 2x
        assert check_gradients(bad, [np.array([1.0, 2.0])]) > 0.3

    def test_relative_error_floor(self):
        assert relative_error(np.array([0.0]), np.array([0.0]))[0] == 0.0


class TestOptimizer:
    def test_zero_gradient_keeps_values(self):
        s = ParameterStore()
        s.add("w", [1.0, -2.0])
        s.zero_grad()
        sgd_step(s, 0.5)
        np.testing.assert_array_equal(s["w"].data, [1.0, -2.0])

    def test_single_step(self):
        s = ParameterStore()
        s.add("w", [1.0])
        s["w"].grad = np.array([2.0])
        sgd_step(s, 0.1)
        np.testing.assert_allclose(s["w"].data, [0.8])
        np.testing.assert_array_equal(s["w"].grad, [0.0])

    @pytest.mark.parametrize("opt", ["sgd", "momentum", "adam"])
    def test_quadratic(self, opt):
        target = np.array([3.0, -1.0, 0.5])
        s = ParameterStore()
        s.add("w", np.zeros(3))
        stepper = {"sgd": lambda: sgd_step(s, 0.1), "momentum": SGD(s, 0.05, 0.5).step,
                   "adam": Adam(s, 0.1).step}[opt]
        for _ in range(200):
            d = s["w"] - target
            ag.sum(d * d * 0.5).backward()
            stepper()
        assert np.max(np.abs(s["w"].data - target)) < 1e-3

    def test_clipping_and_scales(self):
        s = ParameterStore()
        s.add("sinc.w", [0.0])
        s.add("other", [0.0])
        opt = SGD(s, 1.0, clip_norm=1.0, lr_scale={"sinc.": 0.1})
        s["sinc.w"].grad = np.array([3.0])
        s["other"].grad = np.array([4.0])
        opt.step()
        np.testing.assert_allclose(s["sinc.w"].data, [-0.06])
        np.testing.assert_allclose(s["other"].data, [-0.8])


class TestCheckpoint:
    def values(self):
        rng = np.random.default_rng(3)
        return {"a.weight": rng.normal(size=(3, 2)), "b": np.array([0.1, 1e-300, -2.5e17])}

    def test_round_trip_exact(self, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        h1 = checkpoint.save(p1, self.values(), {"k": 1}, 7)
        values, config, seed = checkpoint.load(p1)
        for k, v in self.values().items():
            np.testing.assert_array_equal(values[k], v)
        assert (config, seed) == ({"k": 1}, 7)
        h2 = checkpoint.save(p2, values, config, seed)
        assert h1 == h2 == checkpoint.file_hash(p2)
        assert p1.read_bytes() == p2.read_bytes()

    @pytest.mark.parametrize("mutate, match", [
        (lambda d: d.update(format="other"), "format"),
        (lambda d: d.update(version=99), "version"),
        (lambda d: d.pop("params"), "params"),
        (lambda d: d["params"]["b"].update(shape=[2]), "shape"),
    ])
    def test_schema_errors(self, mutate, match):
        doc = json.loads(checkpoint.dumps(self.values(), {}, 0))
        mutate(doc)
        with pytest.raises(checkpoint.CheckpointSchemaError, match=match):
            checkpoint.loads(json.dumps(doc))

    def test_not_json(self):
        with pytest.raises(checkpoint.CheckpointSchemaError):
            checkpoint.loads("{")


class TestParameterStore:
    def test_load_values_checks_shapes(self):
        s = ParameterStore()
        s.add("w", np.zeros(3))
        with pytest.raises(DimensionError):
            s.load_values({"w": np.zeros(4)})
        with pytest.raises(KeyError):
            s.load_values({})

    def test_seeded_init_is_reproducible(self):
        a, b = ParameterStore(5), ParameterStore(5)
        init_linear(a, "l", 4, 3)
        init_linear(b, "l", 4, 3)
        np.testing.assert_array_equal(a["l.weight"].data, b["l.weight"].data)
        assert a.count() == 15 and a.count("l.bias") == 3
