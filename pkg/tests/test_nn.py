import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfbid.errors import ConfigurationError, TapeConsumedError, TrainingError
from mfbid.nn import (
    Adam,
    OptimizerConfig,
    ParamSet,
    Tensor,
    attention_block,
    attention_weights,
    autodiff as ad,
    backward,
    dense,
    init_attention,
    init_dense,
    init_mlp,
    mlp,
)
from mfbid.nn.checkpoint import dumps_params, loads_params
from mfbid.nn.gradcheck import check_gradients


def _layer(fan_in, fan_out, W, b):
    p = ParamSet()
    p.add("d.W", np.asarray(W, dtype=float).reshape(fan_in, fan_out))
    p.add("d.b", np.asarray(b, dtype=float).reshape(fan_out))
    return p


class TestDense:
    def test_zero_layer_annihilates(self):
        p = _layer(3, 2, np.zeros(6), np.zeros(2))
        out = dense(Tensor(np.random.default_rng(0).normal(size=(4, 3))), p, "d")
        assert np.all(out.data == 0.0)

    def test_identity_layer(self):
        p = _layer(3, 3, np.eye(3), np.zeros(3))
        x = np.random.default_rng(1).normal(size=(5, 3))
        np.testing.assert_array_equal(dense(Tensor(x), p, "d").data, x)

    def test_scalar_affine(self):
        p = _layer(1, 1, [2.0], [1.0])
        assert dense(Tensor([[3.0]]), p, "d").item() == 7.0

    def test_shape_mismatch(self):
        p = _layer(3, 1, np.zeros(3), np.zeros(1))
        with pytest.raises(ConfigurationError):
            dense(Tensor(np.zeros((2, 4))), p, "d")


class TestBackward:
    def test_sum_gives_ones(self):
        p = ParamSet()
        w = p.add("w", np.arange(6.0).reshape(2, 3))
        backward(ad.sum(w))
        np.testing.assert_array_equal(w.grad, np.ones((2, 3)))

    def test_square(self):
        p = ParamSet()
        w = p.add("w", [3.0])
        backward(ad.sum(w * w))
        assert w.grad[0] == 6.0

    def test_second_backward_raises(self):
        p = ParamSet()
        w = p.add("w", [1.0, 2.0])
        loss = ad.sum(w * w)
        backward(loss)
        with pytest.raises(TapeConsumedError):
            backward(loss)

    def test_non_scalar_rejected(self):
        p = ParamSet()
        w = p.add("w", [1.0, 2.0])
        with pytest.raises(ValueError):
            backward(w * 2.0)

    def test_shared_subexpression_accumulates(self):
        p = ParamSet()
        w = p.add("w", [2.0])
        y = w * w
        backward(ad.sum(y + y))
        assert w.grad[0] == 8.0

    def test_no_grad_records_nothing(self):
        p = ParamSet()
        w = p.add("w", [2.0])
        with ad.no_grad():
            y = w * w
        assert not y.requires_grad


def _gradcheck_ok(results, tol=1e-4):
    worst = max(r.rel_error for r in results)
    assert worst < tol, [(r.path, r.index, r.analytic, r.numeric) for r in results if r.rel_error >= tol]


class TestGradientChecks:
    def test_mlp(self):
        rng = np.random.default_rng(2)
        p = ParamSet()
        init_mlp(p, "m", [3, 8, 8, 2], rng)
        x = Tensor(rng.normal(size=(6, 3)))

        def loss():
            return ad.sum(ad.tanh(mlp(x, p, "m", 3, hidden="tanh")) ** 2)

        _gradcheck_ok(check_gradients(loss, p, 20, rng))

    def test_attention_block(self):
        rng = np.random.default_rng(3)
        p = ParamSet()
        init_attention(p, "att", 4, 8, rng)
        x = Tensor(rng.normal(size=(2, 3, 4)))
        target = rng.normal(size=(2, 3, 4))

        def loss():
            return ad.sum((attention_block(x, p, "att") - target) ** 2)

        _gradcheck_ok(check_gradients(loss, p, 20, rng))

    def test_elementwise_ops(self):
        rng = np.random.default_rng(4)
        p = ParamSet()
        p.add("a", rng.uniform(0.2, 0.8, size=(3, 5)))
        idx = np.array([0, 4, 2])

        def loss():
            a = p["a"]
            h = ad.clip(ad.sigmoid(a), 1e-6, 1 - 1e-6)
            c = ad.cumsum(ad.log(1.0 - h), axis=-1)
            g = ad.gather_last(c, idx)
            s = ad.softplus(a) + ad.expm1(a * 0.1) + ad.exp(-a)
            return ad.sum(g) + ad.mean(s) + ad.sum(ad.softmax(a, axis=-1) * ad.relu(a - 0.5))

        _gradcheck_ok(check_gradients(loss, p, 15, rng))

    def test_embedding_and_concat(self):
        rng = np.random.default_rng(5)
        p = ParamSet()
        p.add("E", rng.normal(size=(7, 3)))
        idx = np.array([[0, 3], [3, 6], [1, 1]])

        def loss():
            e = ad.take_rows(p["E"], idx)
            flat = ad.reshape(e, (3, 6))
            row = ad.take_rows(p["E"], np.array([2]))
            both = ad.concat([flat, ad.broadcast_to(row, (3, 3))], axis=-1)
            return ad.sum(ad.tanh(both) * np.arange(9.0))

        _gradcheck_ok(check_gradients(loss, p, 20, rng))


class TestAttention:
    def test_single_token(self):
        rng = np.random.default_rng(6)
        p = ParamSet()
        init_attention(p, "att", 4, 8, rng)
        w = attention_weights(Tensor(rng.normal(size=(1, 4))), p, "att")
        np.testing.assert_array_equal(w.data, [[1.0]])

    def test_identical_tokens_uniform(self):
        rng = np.random.default_rng(7)
        p = ParamSet()
        init_attention(p, "att", 4, 8, rng)
        tok = rng.normal(size=(1, 4))
        w = attention_weights(Tensor(np.vstack([tok, tok])), p, "att")
        np.testing.assert_allclose(w.data, 0.5, atol=1e-15)

    def test_rows_are_probability_vectors(self):
        rng = np.random.default_rng(8)
        p = ParamSet()
        init_attention(p, "att", 4, 8, rng)
        x = rng.normal(size=(3, 4))
        w = attention_weights(Tensor(x), p, "att").data
        # independent evaluation of the same softmax
        q = x @ p["att.q.W"].data + p["att.q.b"].data
        k = x @ p["att.k.W"].data + p["att.k.b"].data
        s = q @ k.T / 2.0
        ref = np.exp(s - s.max(axis=1, keepdims=True))
        ref /= ref.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(w, ref, atol=1e-12)
        assert np.all(w >= 0)
        assert np.all(np.abs(w.sum(axis=1) - 1.0) < 1e-9)

    def test_output_shape_and_nonfinite(self):
        rng = np.random.default_rng(9)
        p = ParamSet()
        init_attention(p, "att", 4, 8, rng)
        out = attention_block(Tensor(rng.normal(size=(3, 4))), p, "att")
        assert out.shape == (3, 4)
        p["att.q.W"].data[0, 0] = np.inf
        with pytest.raises(TrainingError, match="att.q"):
            attention_weights(Tensor(np.ones((2, 4))), p, "att")

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 10_000))
    def test_rows_sum_to_one_property(self, tokens, seed):
        rng = np.random.default_rng(seed)
        p = ParamSet()
        init_attention(p, "att", 4, 4, rng)
        w = attention_weights(Tensor(rng.normal(scale=3.0, size=(tokens, 4))), p, "att").data
        assert np.all(w >= 0) and np.all(np.abs(w.sum(axis=-1) - 1.0) < 1e-9)


class TestAdam:
    def test_zero_gradient_fixed_point(self):
        p = ParamSet()
        p.add("w", [1.0, -2.0])
        opt = Adam(p, OptimizerConfig(learning_rate=0.1))
        opt.step()
        np.testing.assert_array_equal(p["w"].data, [1.0, -2.0])

    def test_descends_quadratic(self):
        p = ParamSet()
        w = p.add("w", [1.0])
        opt = Adam(p, OptimizerConfig(learning_rate=0.1))
        backward(ad.sum(w * w))
        opt.step()
        assert abs(w.data[0]) < 1.0
        assert np.all(w.grad == 0.0)
        assert opt.steps == 1

    def test_decay_closed_form(self):
        p = ParamSet()
        p.add("w", [1.0])
        cfg = OptimizerConfig(learning_rate=0.01, decay_factor=0.97)
        opt = Adam(p, cfg)
        for _ in range(25):
            opt.decay()
        assert opt.learning_rate == 0.01 * 0.97 ** 25

    def test_bad_config(self):
        with pytest.raises(ConfigurationError):
            OptimizerConfig(learning_rate=0.0)
        with pytest.raises(ConfigurationError):
            OptimizerConfig(decay_factor=1.5)

    def test_deterministic_training(self):
        def run():
            rng = np.random.default_rng(11)
            p = ParamSet()
            init_mlp(p, "m", [2, 6, 1], rng)
            opt = Adam(p, OptimizerConfig(learning_rate=0.01))
            x = Tensor(rng.normal(size=(16, 2)))
            y = rng.normal(size=(16, 1))
            for _ in range(30):
                backward(ad.mean((mlp(x, p, "m", 2) - y) ** 2))
                opt.step()
            return p.to_dict()

        a, b = run(), run()
        for k in a:
            assert a[k].tobytes() == b[k].tobytes()


class TestParamsAndCheckpoint:
    def test_soft_update_interpolates(self):
        rng = np.random.default_rng(12)
        online, target = ParamSet(), ParamSet()
        online.add("w", rng.normal(size=(3, 2)))
        target.add("w", rng.normal(size=(3, 2)))
        before = target["w"].data - online["w"].data
        target.soft_update_from(online, 0.3)
        np.testing.assert_allclose(target["w"].data - online["w"].data, 0.7 * before, atol=1e-15)
        target.soft_update_from(online, 1.0)
        np.testing.assert_array_equal(target["w"].data, online["w"].data)

    def test_checkpoint_round_trip(self, tmp_path):
        rng = np.random.default_rng(13)
        p = ParamSet()
        init_dense(p, "d", 3, 2, rng)
        text = dumps_params(p, {"kind": "test"})
        q, meta = loads_params(text)
        assert meta == {"kind": "test"}
        for k in p:
            assert p[k].data.tobytes() == q[k].data.tobytes()
        assert dumps_params(q, {"kind": "test"}) == text
        assert json.loads(text)["version"] == 1

    def test_checkpoint_rejects_foreign(self):
        with pytest.raises(ConfigurationError):
            loads_params(json.dumps({"format": "other", "version": 1, "params": {}}))

    def test_init_ranges(self):
        rng = np.random.default_rng(14)
        p = ParamSet()
        init_dense(p, "d", 10, 30, rng)
        assert np.all(np.abs(p["d.W"].data) <= np.sqrt(6 / 40))
        assert np.all(p["d.b"].data == 0)
