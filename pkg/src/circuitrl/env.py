"""Episodic design environment: samples latents per episode, runs the scenario
simulator, computes rewards, and maintains the zero-padded history that is the
policy's only input.

Latents are hidden from the policy (they reach the reward path only for the
growth-constrained scenario); rewards never enter the history. Episode
randomness is keyed as (master_seed, episode_index, step), so any episode can
be replayed independently of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import hostaware
from . import repressilator as rep
from .core import (EpisodeRecord, EpisodeStep, History, LatentParams,
                   Observation, integer_seed, rng_from_key, sample_prior,
                   scale_action)
from .nets import gaussian_sample
from .rewards import (ConstrainedYieldReward, OscillatorReward,
                      OptimalActionRegressor, PeakValueReward,
                      QuadraticBanditReward, RewardNormalizer, YieldReward,
                      normalized_autocorrelation, reward_yield)
from .scenarios import ScenarioConfig


class EpisodeAborted(RuntimeError):
    """Simulator failure mid-episode; the trainer skips and logs these."""


@dataclass
class ScenarioArtifacts:
    regressor: OptimalActionRegressor | None = None
    normalizer: RewardNormalizer | None = None


def check_artifacts(config: ScenarioConfig, artifacts: ScenarioArtifacts | None,
                    *, for_training: bool) -> ScenarioArtifacts:
    artifacts = artifacts or ScenarioArtifacts()
    if config.needs_regressor and artifacts.regressor is None:
        raise ValueError(
            f"scenario {config.scenario!r} needs an optimal-action regressor artifact; "
            "build one with the 'artifacts' subcommand")
    if config.needs_normalizer and artifacts.normalizer is None:
        raise ValueError(
            f"scenario {config.scenario!r} needs a reward-normalizer artifact; "
            "build one with the 'artifacts' subcommand")
    return artifacts


# ---------------------------------------------------------------------------
# Simulators
# ---------------------------------------------------------------------------


class HostawareSimulator:
    """Deterministic steady-state readout; optionally also relative growth."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.settings = config.host_settings()
        self.params = hostaware.load_default_params()
        self.with_growth = config.obs_dim == 2
        self._lambda0_cache: tuple[LatentParams, float] | None = None

    def uninduced_growth(self, theta: LatentParams) -> float:
        if self._lambda0_cache is not None and self._lambda0_cache[0] is theta:
            return self._lambda0_cache[1]
        res = hostaware.simulate_to_steady_state(theta, 0.0, self.settings, self.params)
        self._lambda0_cache = (theta, res.lambda_ss)
        return res.lambda_ss

    def observe(self, theta: LatentParams, a_norm: np.ndarray, seed: int) -> Observation:
        a_phys = scale_action(a_norm, self.config.bounds)
        try:
            res = hostaware.simulate_to_steady_state(theta, float(a_phys[0]),
                                                     self.settings, self.params)
            if self.with_growth:
                lam0 = self.uninduced_growth(theta)
                growth_rel = res.lambda_ss / lam0 if lam0 > 0 else 0.0
                return Observation(scalar=np.array([res.gfp_ss, growth_rel]))
            return Observation(scalar=np.array([res.gfp_ss]))
        except hostaware.SimulationError as exc:
            raise EpisodeAborted(f"host simulation failed: {exc}") from exc


class RepressilatorSimulator:
    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.settings = config.repressilator_settings()
        self.fixed = dict(config.fixed_params)

    def observe(self, theta: LatentParams, a_norm: np.ndarray, seed: int) -> Observation:
        a_phys = scale_action(a_norm, self.config.bounds)
        try:
            return rep.sample_trajectory(theta, a_phys, self.config.bounds,
                                         seed, self.settings, self.fixed)
        except rep.SsaError as exc:
            raise EpisodeAborted(f"SSA failed: {exc}") from exc


class BanditSimulator:
    """1-D quadratic test bench: observation is the squared distance to target."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.target = config.reward.target

    def observe(self, theta: LatentParams, a_norm: np.ndarray, seed: int) -> Observation:
        a_phys = scale_action(a_norm, self.config.bounds)
        return Observation(scalar=np.array([(float(a_phys[0]) - self.target) ** 2]))


def make_simulator(config: ScenarioConfig):
    if config.scenario.startswith("hostaware"):
        return HostawareSimulator(config)
    if config.scenario.startswith("repressilator"):
        return RepressilatorSimulator(config)
    if config.scenario == "bandit-quadratic":
        return BanditSimulator(config)
    raise ValueError(f"no simulator for scenario {config.scenario!r}")


# ---------------------------------------------------------------------------
# Reward computation
# ---------------------------------------------------------------------------


class RewardComputer:
    def __init__(self, config: ScenarioConfig, artifacts: ScenarioArtifacts):
        self.config = config
        self.spec = config.reward
        self.artifacts = artifacts
        self.burn_in = (config.repressilator_settings().burn_in_frac
                        if config.obs_kind == "series" else 0.0)

    def __call__(self, theta: LatentParams, a_norm: np.ndarray, obs: Observation) -> float:
        spec = self.spec
        if isinstance(spec, YieldReward):
            return reward_yield(obs)
        if isinstance(spec, ConstrainedYieldReward):
            reg = self.artifacts.regressor
            if reg is None:
                raise ValueError("constrained reward requires the regressor artifact")
            from .rewards import reward_constrained

            return reward_constrained(float(a_norm[0]), theta, reg)
        if isinstance(spec, (OscillatorReward, PeakValueReward)):
            traj = rep.trim_burn_in(obs.series, self.burn_in)
            ac = normalized_autocorrelation(traj)
            norm = self.artifacts.normalizer
            floor = norm.floor if norm is not None else spec.floor
            if not ac.valid:
                raw = floor
            elif isinstance(spec, OscillatorReward):
                f = 1.0 / ac.tau2
                raw = -((f - spec.f_star) ** 2) + spec.lambda_w * ac.C_tau2
            else:
                raw = float(ac.C_tau2)
            if norm is not None:
                return norm.normalize(raw, theta)
            return raw
        if isinstance(spec, QuadraticBanditReward):
            return -float(obs.scalar[0])
        raise TypeError(f"unhandled reward spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------


class DesignEnv:
    """One sequential design episode at a time, gym-style reset/step."""

    def __init__(self, config: ScenarioConfig, master_seed: int,
                 artifacts: ScenarioArtifacts | None = None,
                 fixed_theta: LatentParams | None = None):
        config.validate()
        self.config = config
        self.master_seed = int(master_seed)
        self.artifacts = artifacts or ScenarioArtifacts()
        self.fixed_theta = fixed_theta
        self.simulator = make_simulator(config)
        self.reward_fn = RewardComputer(config, self.artifacts)
        self.episode_index = -1
        self.theta: LatentParams | None = None
        self.history: History | None = None
        self.t = 0
        self._steps: list[EpisodeStep] = []

    @property
    def horizon(self) -> int:
        return self.config.horizon

    @property
    def encoded_dim(self) -> int:
        return self.config.horizon * (self.config.obs_dim + self.config.bounds.dim)

    def _sample_theta(self) -> LatentParams:
        if self.fixed_theta is not None:
            return self.fixed_theta
        if len(self.config.prior) == 0:
            # Fully fixed scenario: latents come from the config's constants.
            return LatentParams((), np.array([]))
        rng = rng_from_key(self.master_seed, self.episode_index, 0xA11CE)
        return sample_prior(self.config.prior, rng)

    def reset(self) -> np.ndarray:
        self.episode_index += 1
        self.theta = self._sample_theta()
        self.history = History(self.config.horizon, self.config.bounds.dim,
                               self.config.obs_dim)
        self.t = 1
        self._steps = []
        # Per-episode action-noise stream: episodes are a pure function of
        # (master_seed, episode_index) for a fixed policy.
        self.action_rng = rng_from_key(self.master_seed, self.episode_index, 0xAC7104)
        return self.history.encode()

    def step_seed(self, t: int) -> int:
        return integer_seed(self.master_seed, self.episode_index, t)

    def step(self, a_norm: np.ndarray) -> tuple[np.ndarray, float, bool, dict]:
        if self.history is None:
            raise RuntimeError("call reset() before step()")
        if self.t > self.config.horizon:
            raise RuntimeError("episode is complete; call reset()")
        a = np.clip(np.asarray(a_norm, dtype=float), -1.0, 1.0)
        obs = self.simulator.observe(self.theta, a, self.step_seed(self.t))
        reward = self.reward_fn(self.theta, a, obs)
        self.history.append(a, obs)
        self._steps.append(EpisodeStep(action_norm=a, observation=obs, reward=reward))
        self.t += 1
        done = self.t > self.config.horizon
        info = {"action_phys": scale_action(a, self.config.bounds).tolist(), "t": self.t - 1}
        return self.history.encode(), reward, done, info

    def episode_record(self) -> EpisodeRecord:
        return EpisodeRecord(theta=self.theta, steps=tuple(self._steps),
                             seed=self.episode_index)


PolicyFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


def run_episode(env: DesignEnv, policy: PolicyFn, *,
                deterministic: bool = False,
                action_rng: np.random.Generator | None = None) -> EpisodeRecord:
    """Reset + horizon steps with actions sampled from the policy.

    Stochastic mode draws action noise from a stream derived from the env's
    seeding scheme unless an explicit generator is supplied, so parallel and
    sequential execution produce identical episodes.
    """
    enc = env.reset()
    if action_rng is None and not deterministic:
        action_rng = env.action_rng
    done = False
    while not done:
        mean, std = policy(enc)
        mean = np.asarray(mean, dtype=float).reshape(-1)
        if deterministic:
            a = mean
        else:
            a = gaussian_sample(mean, np.asarray(std, dtype=float), action_rng)
        enc, _, done, _ = env.step(np.clip(a, -1.0, 1.0))
    return env.episode_record()


class VecEnv:
    """N independent environments stepped in lockstep.

    Env i is seeded master_seed + i; the multiset of episodes matches N
    sequential runs with those seeds regardless of batching.
    """

    def __init__(self, config: ScenarioConfig, master_seed: int, n_envs: int,
                 artifacts: ScenarioArtifacts | None = None,
                 fixed_theta: LatentParams | None = None):
        self.envs = [DesignEnv(config, master_seed + i, artifacts, fixed_theta)
                     for i in range(n_envs)]
        self.n_envs = n_envs
        self.config = config

    def reset_all(self) -> np.ndarray:
        return np.stack([env.reset() for env in self.envs])
