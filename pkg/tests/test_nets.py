"""Network layout, init statistics, forward/backward exactness, checkpoints."""

import math

import numpy as np
import pytest

from genscl import nets
from genscl.errors import CheckpointError, StaleCacheError
from genscl.nets import EmbeddingNet, NetSpec, ParamVector


def nudged_params(spec, seed, scale=0.02):
    """Init plus small noise: biases off zero keeps ReLU and pooling ties away
    from finite-difference kinks."""
    rng = np.random.default_rng(seed)
    base = nets.init(spec, rng)
    return ParamVector(base.values + scale * rng.standard_normal(base.values.size), base.layout)


def quadratic_loss(target):
    def loss_fn(e):
        return float(np.sum((e - target) ** 2)), 2.0 * (e - target)

    return loss_fn


class TestSpecAndLayout:
    def test_mlp_needs_two_widths(self):
        with pytest.raises(ValueError):
            NetSpec.mlp((4,))

    def test_conv_pooling_divisibility(self):
        with pytest.raises(ValueError):
            NetSpec.conv(input_side=20, blocks=3, filters=4, embed_dim=8)

    def test_reference_conv_parameter_count(self):
        # Six 64-filter blocks on 128px inputs with a 256-wide head:
        # 640 + 5*36928 + 65792 parameters.
        spec = NetSpec.conv(input_side=128, blocks=6, filters=64, embed_dim=256)
        total = sum(int(np.prod(s)) for _, s in nets.param_layout(spec))
        blocks = 64 * 9 + 64 + 5 * (64 * 64 * 9 + 64)
        head = 256 * (64 * (128 // 2**6) ** 2) + 256
        assert total == blocks + head == 251072

    def test_param_vector_length_checked(self):
        spec = NetSpec.mlp((2, 3))
        layout = tuple(nets.param_layout(spec))
        with pytest.raises(ValueError):
            ParamVector(np.zeros(5), layout)


class TestInit:
    def test_deterministic(self):
        spec = NetSpec.mlp((4, 8, 2))
        a = nets.init(spec, np.random.default_rng(3))
        b = nets.init(spec, np.random.default_rng(3))
        assert np.array_equal(a.values, b.values)

    def test_he_uniform_std(self):
        spec = NetSpec.mlp((64, 128, 8))
        stds = []
        for seed in range(10):
            p = nets.init(spec, np.random.default_rng(seed)).slices()
            stds.append(np.std(p["w0"]))
        target = math.sqrt(2.0 / 64)
        assert abs(np.mean(stds) - target) / target < 0.2

    def test_biases_zero(self):
        spec = NetSpec.conv(input_side=16, blocks=2, filters=3, embed_dim=4)
        p = nets.init(spec, np.random.default_rng(0)).slices()
        assert not p["conv0_b"].any() and not p["head_b"].any()

    def test_no_hidden_layer_is_linear_map(self):
        spec = NetSpec.mlp((3, 2))
        params = nets.init(spec, np.random.default_rng(1))
        w = params.slices()["w0"]
        x = np.random.default_rng(2).standard_normal(3)
        out, _ = nets.forward(spec, params, x)
        assert np.allclose(out, w @ x)


class TestForward:
    def test_identity_linear_layer(self):
        spec = NetSpec.mlp((3, 3))
        layout = tuple(nets.param_layout(spec))
        values = np.concatenate([np.eye(3).reshape(-1), np.zeros(3)])
        params = ParamVector(values, layout)
        x = np.array([0.3, -1.2, 2.0])
        out, _ = nets.forward(spec, params, x)
        assert np.allclose(out, x)

    def test_hand_computed_mlp(self):
        # 2-2-1 with fixed weights, checked against manual arithmetic.
        spec = NetSpec.mlp((2, 2, 1))
        layout = tuple(nets.param_layout(spec))
        w0 = np.array([[1.0, -1.0], [0.5, 2.0]])
        b0 = np.array([0.1, -0.2])
        w1 = np.array([[2.0, -3.0]])
        b1 = np.array([0.05])
        params = ParamVector(
            np.concatenate([w0.reshape(-1), b0, w1.reshape(-1), b1]), layout
        )
        x = np.array([0.4, 0.3])
        h = np.maximum(w0 @ x + b0, 0.0)
        expected = w1 @ h + b1
        out, _ = nets.forward(spec, params, x)
        assert np.allclose(out, expected, atol=1e-12)

    def test_conv_zero_input_zero_bias_zero_embedding(self):
        spec = NetSpec.conv(input_side=16, blocks=2, filters=3, embed_dim=4)
        params = nets.init(spec, np.random.default_rng(0))
        out, _ = nets.forward(spec, params, np.zeros((16, 16)))
        assert np.allclose(out, 0.0)

    def test_pure_repeatable(self):
        spec = NetSpec.conv(input_side=16, blocks=1, filters=2, embed_dim=3)
        params = nudged_params(spec, 4)
        x = np.random.default_rng(5).random((16, 16))
        a, _ = nets.forward(spec, params, x)
        b, _ = nets.forward(spec, params, x)
        assert np.array_equal(a, b)

    def test_batch_matches_single(self):
        spec = NetSpec.conv(input_side=16, blocks=2, filters=3, embed_dim=4)
        params = nudged_params(spec, 6)
        xs = np.random.default_rng(7).random((5, 16, 16))
        batch, _ = nets.forward(spec, params, xs)
        singles = np.stack([nets.forward(spec, params, x)[0] for x in xs])
        assert np.allclose(batch, singles, atol=1e-12)

    def test_dimension_mismatch(self):
        spec = NetSpec.mlp((3, 2))
        params = nets.init(spec, np.random.default_rng(0))
        with pytest.raises(ValueError):
            nets.forward(spec, params, np.zeros(4))


class TestBackward:
    def test_zero_output_grad(self):
        spec = NetSpec.mlp((3, 4, 2))
        params = nudged_params(spec, 8)
        x = np.random.default_rng(9).standard_normal(3)
        out, cache = nets.forward(spec, params, x)
        g = nets.backward(spec, params, cache, np.zeros_like(out))
        assert not g.values.any()

    def test_linearity(self):
        spec = NetSpec.mlp((3, 4, 2))
        params = nudged_params(spec, 10)
        x = np.random.default_rng(11).standard_normal(3)
        out, cache = nets.forward(spec, params, x)
        g1 = np.array([1.0, 0.0])
        g2 = np.array([0.0, 1.0])
        ga = nets.backward(spec, params, cache, 2.0 * g1 + 3.0 * g2).values
        gb = (
            2.0 * nets.backward(spec, params, cache, g1).values
            + 3.0 * nets.backward(spec, params, cache, g2).values
        )
        assert np.allclose(ga, gb, atol=1e-10)

    def test_stale_cache_rejected(self):
        spec = NetSpec.mlp((3, 2))
        p1 = nudged_params(spec, 12)
        p2 = nudged_params(spec, 13)
        x = np.zeros(3)
        _, cache = nets.forward(spec, p1, x)
        with pytest.raises(StaleCacheError):
            nets.backward(spec, p2, cache, np.ones(2))


class TestFiniteDiff:
    def test_mlp_quadratic(self):
        spec = NetSpec.mlp((4, 8, 3))
        params = nudged_params(spec, 14)
        rng = np.random.default_rng(15)
        x = rng.standard_normal(4)
        err = nets.finite_diff_check(
            spec, params, x, quadratic_loss(rng.standard_normal(3)), eps=1e-5, rng=rng
        )
        assert err <= 1e-4

    def test_conv_softmax_style(self):
        spec = NetSpec.conv(input_side=16, blocks=2, filters=3, embed_dim=5)
        params = nudged_params(spec, 16)
        rng = np.random.default_rng(17)
        x = np.clip(rng.random((16, 16)), 0.05, 0.95)
        target = rng.standard_normal(5)

        def softmax_like(e):
            s = float(np.sum(e * target))
            return float(np.logaddexp(0.0, s)), target / (1.0 + np.exp(-s))

        err = nets.finite_diff_check(spec, params, x, softmax_like, eps=1e-5, rng=rng)
        assert err <= 1e-4

    def test_constant_loss_zero_error(self):
        spec = NetSpec.mlp((3, 2))
        params = nudged_params(spec, 18)

        def constant(e):
            return 1.0, np.zeros_like(e)

        err = nets.finite_diff_check(
            spec, params, np.ones(3), constant, eps=1e-5, rng=np.random.default_rng(0)
        )
        assert err == 0.0

    def test_eps_domain(self):
        spec = NetSpec.mlp((3, 2))
        params = nudged_params(spec, 19)
        with pytest.raises(ValueError):
            nets.finite_diff_check(spec, params, np.ones(3), quadratic_loss(np.zeros(2)), eps=1e-2)


class TestCheckpoints:
    def test_roundtrip(self, tmp_path):
        spec = NetSpec.conv(input_side=16, blocks=2, filters=3, embed_dim=4)
        params = nudged_params(spec, 20)
        path = tmp_path / "net.ckpt"
        nets.save_checkpoint(path, spec, params)
        spec2, params2 = nets.load_checkpoint(path)
        assert spec2 == spec
        assert np.array_equal(params2.values, params.values)

    def test_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError):
            nets.load_checkpoint(path)

    def test_hash_mismatch_rejected(self, tmp_path):
        spec = NetSpec.mlp((2, 2))
        params = nets.init(spec, np.random.default_rng(0))
        path = tmp_path / "net.ckpt"
        nets.save_checkpoint(path, spec, params)
        blob = bytearray(path.read_bytes())
        blob[20] ^= 0xFF  # corrupt the stored spec hash
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            nets.load_checkpoint(path)

    def test_expected_spec_mismatch(self, tmp_path):
        spec = NetSpec.mlp((2, 2))
        params = nets.init(spec, np.random.default_rng(0))
        path = tmp_path / "net.ckpt"
        nets.save_checkpoint(path, spec, params)
        with pytest.raises(CheckpointError):
            nets.load_checkpoint(path, expected_spec=NetSpec.mlp((2, 3)))

    def test_embedding_net_wrapper(self):
        spec = NetSpec.mlp((2, 3))
        net = EmbeddingNet(spec, nets.init(spec, np.random.default_rng(1)))
        xs = np.random.default_rng(2).standard_normal((4, 2))
        assert net.embed_batch(xs).shape == (4, 3)
        assert np.allclose(net.embed(xs[0]), net.embed_batch(xs)[0])
