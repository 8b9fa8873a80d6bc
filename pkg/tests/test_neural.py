import json

import numpy as np
import pytest

from circuitrl import nets
from circuitrl.core import rng_from_key
from circuitrl.nets import (Adam, NetSpec, PolicyCheckpoint, PolicyValueNet,
                            gaussian_entropy, gaussian_log_prob, gaussian_sample)


def fd_check_policy_value(net: PolicyValueNet, x: np.ndarray,
                          rng: np.random.Generator, h=1e-5, tol=1e-4) -> float:
    """Central finite differences on a fixed composite scalar loss over every
    parameter, against the analytic reverse-mode gradient."""
    B = x.shape[0]
    A = net.spec.action_dim
    wm = rng.normal(size=(B, A))
    wv = rng.normal(size=B)
    wl = rng.normal(size=A)

    def loss():
        mean, std, value = net.forward(x)
        return float((wm * mean).sum() + (wv * value).sum() + (wl * np.log(std)).sum())

    net.zero_grad()
    net.forward(x)
    net.backward(wm, wv, wl)
    g_analytic = net.params.grad.copy()

    flat = net.params.flat
    g_fd = np.empty_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        lp = loss()
        flat[i] = orig - h
        lm = loss()
        flat[i] = orig
        g_fd[i] = (lp - lm) / (2 * h)
    scale = np.maximum(np.abs(g_fd), 1.0)
    return float(np.max(np.abs(g_analytic - g_fd) / scale))


class TestGradients:
    @pytest.mark.parametrize("seed", range(6))
    def test_identity_encoder_nets(self, seed):
        rng = rng_from_key(seed, 1)
        spec = NetSpec(horizon=3, obs_dim=int(rng.integers(1, 3)), action_dim=int(rng.integers(1, 3)),
                       encoder="identity", obs_transform="none",
                       trunk=(int(rng.integers(4, 10)), int(rng.integers(4, 10))))
        net = PolicyValueNet(spec, seed=seed)
        x = rng.normal(size=(4, spec.input_dim))
        assert fd_check_policy_value(net, x, rng) < 1e-4

    @pytest.mark.parametrize("padding,stride", [("zero", 1), ("zero", 2),
                                                ("circular", 1), ("circular", 2)])
    def test_conv_encoder_nets(self, padding, stride):
        rng = rng_from_key(hash(padding) % 1000, stride)
        spec = NetSpec(horizon=2, obs_dim=24, action_dim=2, encoder="conv",
                       obs_transform="none", channels=(3, 4), kernel=5,
                       strides=(stride, stride), padding=padding, trunk=(8,))
        net = PolicyValueNet(spec, seed=stride)
        x = rng.normal(size=(3, spec.input_dim))
        assert fd_check_policy_value(net, x, rng) < 1e-4

    def test_log1p_transform_gradient_path(self):
        # the transform applies to inputs, not parameters, so gradients stay
        # exact; check on a conv net with positive observations
        rng = rng_from_key(99)
        spec = NetSpec(horizon=2, obs_dim=16, action_dim=1, encoder="conv",
                       obs_transform="log1p", obs_scale=0.25, channels=(2, 3),
                       kernel=3, strides=(1, 2), padding="zero", trunk=(6,))
        net = PolicyValueNet(spec, seed=5)
        x = np.abs(rng.normal(size=(2, spec.input_dim))) * 10
        assert fd_check_policy_value(net, x, rng) < 1e-4

    def test_dense_network_regressor_gradient(self):
        rng = rng_from_key(123)
        net = nets.Network(nets.dense_spec(3, [7, 5], 1), seed=3)
        x = rng.normal(size=(6, 3))
        y = rng.normal(size=6)

        def loss():
            pred = net.forward(x)[:, 0]
            return float(((pred - y) ** 2).mean())

        net.zero_grad()
        pred = net.forward(x)[:, 0]
        net.backward(((2.0 / 6) * (pred - y)).reshape(-1, 1))
        g_an = net.params.grad.copy()
        flat = net.params.flat
        for i in range(0, flat.size, 3):
            orig = flat[i]
            flat[i] = orig + 1e-5
            lp = loss()
            flat[i] = orig - 1e-5
            lm = loss()
            flat[i] = orig
            fd = (lp - lm) / 2e-5
            assert abs(g_an[i] - fd) / max(abs(fd), 1.0) < 1e-4

    def test_constant_loss_zero_gradient(self):
        net = PolicyValueNet(NetSpec(horizon=2, obs_dim=1, action_dim=1), seed=0)
        net.zero_grad()
        net.forward(np.zeros((2, net.spec.input_dim)))
        net.backward(np.zeros((2, 1)), np.zeros(2), np.zeros(1))
        assert np.all(net.params.grad == 0.0)

    def test_gradient_linearity(self):
        rng = rng_from_key(7)
        net = PolicyValueNet(NetSpec(horizon=2, obs_dim=2, action_dim=1, trunk=(6,)), seed=1)
        x = rng.normal(size=(3, net.spec.input_dim))
        wm = rng.normal(size=(3, 1))
        net.zero_grad()
        net.forward(x)
        net.backward(wm, np.zeros(3), np.zeros(1))
        g1 = net.params.grad.copy()
        net.zero_grad()
        net.forward(x)
        net.backward(2.5 * wm, np.zeros(3), np.zeros(1))
        g2 = net.params.grad.copy()
        assert np.allclose(g2, 2.5 * g1, rtol=1e-12, atol=1e-12)


class TestForwardProperties:
    def test_zeroed_policy_head_gives_midpoint_mean(self):
        net = PolicyValueNet(NetSpec(horizon=3, obs_dim=1, action_dim=2), seed=4)
        layout = net.params.layout()
        off = layout["policy_mean.W"]["offset"]
        size = int(np.prod(layout["policy_mean.W"]["shape"]))
        net.params.flat[off:off + size] = 0.0
        offb = layout["policy_mean.b"]["offset"]
        net.params.flat[offb:offb + 2] = 0.0
        rng = rng_from_key(2)
        for _ in range(5):
            mean, _, _ = net.forward(rng.normal(size=(1, net.spec.input_dim)))
            assert np.all(mean == 0.0)

    def test_std_strictly_positive(self):
        net = PolicyValueNet(NetSpec(horizon=2, obs_dim=1, action_dim=3), seed=0)
        net.log_std[:] = np.array([-20.0, 0.0, 20.0])
        _, std, _ = net.forward(np.zeros((1, net.spec.input_dim)))
        assert np.all(std > 0)

    def test_shift_invariance_with_circular_padding_and_global_pool(self):
        spec = NetSpec(horizon=1, obs_dim=64, action_dim=1, encoder="conv",
                       obs_transform="none", channels=(4, 6), kernel=9,
                       strides=(1, 1), padding="circular", trunk=(8,))
        net = PolicyValueNet(spec, seed=11)
        rng = rng_from_key(12)
        sig = np.abs(rng.normal(size=64)) + 0.5
        base = np.concatenate([sig, [0.3]])
        m0, _, v0 = net.forward(base.reshape(1, -1))
        for k in (1, 7, 13, 32):
            shifted = np.concatenate([np.roll(sig, k), [0.3]])
            m, _, v = net.forward(shifted.reshape(1, -1))
            rel = abs(v - v0) / (abs(v0) + 1e-12)
            assert rel < 1e-6
            assert np.max(np.abs(m - m0)) / (np.max(np.abs(m0)) + 1e-12) < 1e-6


class TestGaussianHead:
    def test_log_prob_standard_normal_mode(self):
        lp = gaussian_log_prob(np.array([[0.0]]), np.array([[0.0]]), np.array([1.0]))
        assert lp[0] == pytest.approx(-0.5 * np.log(2 * np.pi))

    def test_log_prob_monotone_in_distance(self):
        lps = [gaussian_log_prob(np.array([[a]]), np.array([[0.0]]), np.array([0.7]))[0]
               for a in (0.0, 0.3, 0.9, 2.0)]
        assert lps == sorted(lps, reverse=True)

    def test_gradient_zero_at_mean(self):
        # d logp / d mean = (a - mean) / std^2 = 0 at a = mean
        a = np.array([[0.4, -0.2]])
        mean = a.copy()
        std = np.array([0.5, 1.5])
        grad = (a - mean) / std ** 2
        assert np.all(grad == 0.0)

    def test_entropy_formula(self):
        std = np.array([1.0, 2.0])
        expected = np.log(std).sum() + 0.5 * 2 * (1 + np.log(2 * np.pi))
        assert gaussian_entropy(std) == pytest.approx(expected)

    def test_sampling_statistics(self):
        rng = rng_from_key(8)
        mean = np.array([0.2, -0.4])
        std = np.array([0.5, 1.0])
        draws = np.stack([gaussian_sample(mean, std, rng) for _ in range(20000)])
        assert np.allclose(draws.mean(axis=0), mean, atol=0.02)
        assert np.allclose(draws.std(axis=0), std, atol=0.03)


class TestSerialization:
    def test_policy_net_roundtrip_bit_exact(self):
        spec = NetSpec(horizon=3, obs_dim=32, action_dim=3, encoder="conv",
                       obs_transform="log1p", obs_scale=0.25, channels=(3, 4),
                       kernel=5, strides=(2, 2), trunk=(16, 8))
        net = PolicyValueNet(spec, seed=21)
        blob = json.dumps(net.to_json())
        net2 = PolicyValueNet.from_json(json.loads(blob))
        rng = rng_from_key(5)
        x = np.abs(rng.normal(size=(4, spec.input_dim)))
        m1, s1, v1 = net.forward(x)
        m2, s2, v2 = net2.forward(x)
        assert np.array_equal(m1, m2) and np.array_equal(s1, s2) and np.array_equal(v1, v2)

    def test_layout_covers_every_parameter_exactly_once(self):
        net = PolicyValueNet(NetSpec(horizon=2, obs_dim=4, action_dim=2,
                                     encoder="conv", channels=(2, 2), kernel=3,
                                     trunk=(5,)), seed=0)
        layout = net.params.layout()
        covered = np.zeros(net.params.flat.size, dtype=int)
        for entry in layout.values():
            off = entry["offset"]
            size = int(np.prod(entry["shape"]))
            covered[off:off + size] += 1
        assert np.all(covered == 1)

    def test_checkpoint_scenario_mismatch_rejected(self, tmp_path):
        net = PolicyValueNet(NetSpec(horizon=2, obs_dim=1, action_dim=1), seed=0)
        ckpt = PolicyCheckpoint(scenario_id="hostaware", net=net)
        path = tmp_path / "p.json"
        ckpt.save(path)
        PolicyCheckpoint.load(path, expect_scenario="hostaware")
        with pytest.raises(ValueError):
            PolicyCheckpoint.load(path, expect_scenario="repressilator")


class TestAdam:
    def test_converges_on_quadratic(self):
        params = np.array([5.0, -3.0])
        opt = Adam(2, lr=0.05)
        target = np.array([1.0, 2.0])
        for _ in range(2000):
            grad = 2 * (params - target)
            opt.step(params, grad)
        assert np.allclose(params, target, atol=1e-3)
