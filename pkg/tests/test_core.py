import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest, truncnorm

from circuitrl.core import (ActionBounds, ConfigError, History, LatentParams,
                            Observation, PriorSpec, Trajectory, TruncatedNormal,
                            Uniform, encode_history, rng_from_key, sample_prior,
                            scale_action, unscale_action)


def repressilator_prior():
    return PriorSpec.from_dict({
        "H": Uniform(3, 7),
        "g_X": Uniform(0.8, 1.1),
        "g_m": Uniform(4, 50),
        "eps": Uniform(0.05, 0.15),
    })


class TestPriors:
    def test_uniform_draw_in_bounds(self):
        spec = PriorSpec.from_dict({"x": Uniform(0, 1)})
        for seed in range(20):
            theta = sample_prior(spec, rng_from_key(seed))
            assert 0.0 <= theta["x"] <= 1.0

    def test_truncated_normal_symmetric_mean(self):
        # Symmetric truncation about the mean keeps the mean at 1.
        spec = PriorSpec.from_dict({"k": TruncatedNormal(1, 1, 0, 2)})
        rng = rng_from_key(123)
        draws = np.array([sample_prior(spec, rng)["k"] for _ in range(100_000)])
        assert abs(draws.mean() - 1.0) < 0.01
        assert draws.min() >= 0.0 and draws.max() <= 2.0

    def test_truncated_normal_matches_analytic_cdf(self):
        spec = PriorSpec.from_dict({"k": TruncatedNormal(1, 1, 0, 2)})
        rng = rng_from_key(7)
        draws = np.array([sample_prior(spec, rng)["k"] for _ in range(100_000)])
        stat = kstest(draws, truncnorm(-1, 1, loc=1, scale=1).cdf).statistic
        assert stat < 0.01

    def test_repressilator_prior_boxes_seed7(self):
        theta = sample_prior(repressilator_prior(), rng_from_key(7))
        assert 3 <= theta["H"] <= 7
        assert 0.8 <= theta["g_X"] <= 1.1
        assert 4 <= theta["g_m"] <= 50
        assert 0.05 <= theta["eps"] <= 0.15

    def test_replay_determinism(self):
        spec = repressilator_prior()
        a = sample_prior(spec, rng_from_key(99))
        b = sample_prior(spec, rng_from_key(99))
        assert np.array_equal(a.values, b.values)

    def test_malformed_bounds_rejected(self):
        with pytest.raises(ConfigError):
            sample_prior(PriorSpec.from_dict({"x": Uniform(1, 1)}), rng_from_key(0))
        with pytest.raises(ConfigError):
            sample_prior(PriorSpec.from_dict({"x": TruncatedNormal(0, -1, 0, 1)}),
                         rng_from_key(0))

    def test_latent_params_immutable(self):
        theta = LatentParams(("a",), np.array([1.0]))
        with pytest.raises(ValueError):
            theta.values[0] = 2.0


class TestActionScaling:
    def bounds(self):
        return ActionBounds.from_dict({"w": (100.0, 1000.0)})

    def test_midpoint(self):
        assert scale_action(np.array([0.0]), self.bounds())[0] == pytest.approx(550.0)

    def test_endpoints(self):
        b = self.bounds()
        assert scale_action(np.array([-1.0]), b)[0] == 100.0
        assert scale_action(np.array([1.0]), b)[0] == 1000.0

    def test_roundtrip_100_random_vectors(self):
        b = ActionBounds.from_dict({"x": (3.0, 120.0), "y": (10.0, 200.0)})
        rng = rng_from_key(5)
        for _ in range(100):
            a = rng.uniform(-1, 1, size=2)
            back = unscale_action(scale_action(a, b), b)
            assert np.max(np.abs(back - a)) < 1e-12

    def test_out_of_range_clipped(self):
        assert scale_action(np.array([1.5]), self.bounds())[0] == 1000.0

    @given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=3, max_size=3))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_property(self, vals):
        b = ActionBounds.from_dict({"a": (0.0, 1.0), "b": (-5.0, 5.0), "c": (2.0, 3.0)})
        a = np.array(vals)
        assert np.max(np.abs(unscale_action(scale_action(a, b), b) - a)) < 1e-12


class TestHistory:
    def make(self, capacity=5, action_dim=1, obs_dim=2):
        return History(capacity, action_dim, obs_dim)

    def test_empty_history_encodes_to_zeros(self):
        h = self.make()
        enc = encode_history(h)
        assert enc.shape == (5 * 3,)
        assert np.all(enc == 0.0)

    def test_single_entry_padding_and_idempotence(self):
        h = self.make()
        obs = Observation(scalar=np.array([2.0, 0.5]))
        h.append(np.array([0.25]), obs)
        enc1 = encode_history(h)
        enc2 = encode_history(h)
        assert np.array_equal(enc1, enc2)
        assert np.array_equal(enc1[:3], [2.0, 0.5, 0.25])
        assert np.all(enc1[3:] == 0.0)

    def test_full_capacity_layout(self):
        h = self.make(capacity=3, action_dim=1, obs_dim=1)
        for i in range(3):
            h.append(np.array([0.1 * (i + 1)]), Observation(scalar=np.array([float(i)])))
        enc = encode_history(h)
        expected = [0.0, 0.1, 1.0, 0.2, 2.0, 0.3]
        assert np.allclose(enc, expected)
        with pytest.raises(Exception):
            h.append(np.array([0.0]), Observation(scalar=np.array([0.0])))

    def test_encoded_length_constant_in_t(self):
        h = History(4, 2, 2)
        lengths = {encode_history(h).size}
        for i in range(4):
            h.append(np.zeros(2), Observation(scalar=np.array([1.0, 2.0])))
            lengths.add(encode_history(h).size)
        assert lengths == {4 * (2 + 2)}

    def test_obs_shape_mismatch_raises(self):
        h = History(4, 2, 3)
        with pytest.raises(Exception):
            h.append(np.zeros(2), Observation(scalar=np.array([1.0, 2.0])))

    def test_series_observation_encoding(self):
        h = History(2, 1, 4)
        traj = Trajectory(t0=0.0, dt=0.5, values=np.array([1.0, 2.0, 3.0, 4.0]))
        h.append(np.array([0.5]), Observation(series=traj))
        enc = encode_history(h)
        assert np.allclose(enc[:5], [1, 2, 3, 4, 0.5])
        assert np.all(enc[5:] == 0)


class TestObservation:
    def test_scalar_validation(self):
        with pytest.raises(Exception):
            Observation(scalar=np.array([-1.0]))
        with pytest.raises(Exception):
            Observation(scalar=np.array([np.nan]))

    def test_trajectory_validation(self):
        with pytest.raises(Exception):
            Trajectory(t0=0, dt=0, values=np.array([1.0, 2.0]))
        with pytest.raises(Exception):
            Trajectory(t0=0, dt=1, values=np.array([1.0]))

    def test_json_roundtrip(self):
        obs = Observation(series=Trajectory(0.0, 0.5, np.array([1.0, 2.0, 3.0])))
        back = Observation.from_json(obs.to_json())
        assert np.array_equal(back.series.values, obs.series.values)
