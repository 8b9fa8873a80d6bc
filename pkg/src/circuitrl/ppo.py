"""Proximal Policy Optimization over vectorized design environments.

Rollout collection with per-env action-noise streams, generalized advantage
estimation with an undiscounted finite-horizon objective, clipped surrogate
and value losses, minibatched Adam updates, plateau-based early stopping, and
a divergence detector that falls back to the last good checkpoint.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import EpisodeRecord, rng_from_key
from .env import DesignEnv, EpisodeAborted, ScenarioArtifacts, VecEnv, check_artifacts
from .nets import (Adam, NetSpec, PolicyCheckpoint, PolicyValueNet,
                   gaussian_entropy, gaussian_log_prob, gaussian_sample)
from .scenarios import ScenarioConfig


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    gamma: float = 1.0
    lr: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 256
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 400_000
    rollout_steps: int = 250          # per environment
    n_envs: int = 8
    reward_scale: float = 1.0         # applied to buffer rewards only
    patience_updates: int = 50        # plateau rule on smoothed return
    checkpoint_every: int = 50        # updates between periodic checkpoints
    episode_log_every: int = 50       # keep every k-th episode in the jsonl log

    def validate(self) -> None:
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")

    @staticmethod
    def from_scenario(config: ScenarioConfig, **overrides) -> "PpoConfig":
        merged: dict = dict(config.train)
        merged.update({k: v for k, v in overrides.items() if v is not None})
        known = {f for f in PpoConfig.__dataclass_fields__}
        cfg = PpoConfig(**{k: v for k, v in merged.items() if k in known})
        cfg.validate()
        return cfg


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                last_values: np.ndarray, gamma: float, lam: float
                ) -> tuple[np.ndarray, np.ndarray]:
    """Standard GAE over an (L, N) rollout with bootstrap at the buffer end.

    ``dones[t, i]`` marks that env i's episode ended at step t (terminal value
    0: the horizon is finite and undiscounted).
    """
    L, N = rewards.shape
    adv = np.zeros((L, N))
    gae = np.zeros(N)
    next_values = last_values
    for t in range(L - 1, -1, -1):
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * not_done - values[t]
        gae = delta + gamma * lam * not_done * gae
        adv[t] = gae
        next_values = values[t]
    returns = adv + values
    return adv, returns


def clipped_surrogate(logp_new: np.ndarray, logp_old: np.ndarray,
                      advantages: np.ndarray, eps: float) -> float:
    """Negated mean of min(ratio*A, clip(ratio)*A): a loss to minimize."""
    ratio = np.exp(logp_new - logp_old)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    return float(-np.minimum(unclipped, clipped).mean())


@dataclass
class TrainLogRow:
    update: int
    env_steps: int
    episodes: int
    mean_return: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    wall_time: float

    def as_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class TrainResult:
    checkpoint: PolicyCheckpoint
    log: list[TrainLogRow]
    aborted_episodes: int
    wall_time: float
    env_steps: int
    stopped_early: bool = False


class _EpisodeLogger:
    def __init__(self, path: Path | None, every: int):
        self.every = max(1, every)
        self.count = 0
        self.fh = open(path, "w") if path is not None else None

    def log(self, record: EpisodeRecord) -> None:
        if self.fh is not None and self.count % self.every == 0:
            self.fh.write(record.to_jsonl() + "\n")
        self.count += 1

    def close(self) -> None:
        if self.fh is not None:
            self.fh.close()


def train(config: ScenarioConfig, ppo: PpoConfig, seed: int,
          artifacts: ScenarioArtifacts | None = None,
          out_dir: str | Path | None = None,
          fixed_theta=None,
          net_spec: NetSpec | None = None,
          log_fn=None) -> TrainResult:
    """Train a policy on the scenario; deterministic for a fixed seed."""
    ppo.validate()
    artifacts = check_artifacts(config, artifacts, for_training=True)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    spec = net_spec or config.net_spec()
    net = PolicyValueNet(spec, seed=int(rng_from_key(seed, 0xBEEF).integers(2 ** 31)))
    opt = Adam(net.params.flat.size, lr=ppo.lr)
    shuffle_rng = rng_from_key(seed, 0x5FF1E)

    vec = VecEnv(config, master_seed=seed, n_envs=ppo.n_envs,
                 artifacts=artifacts, fixed_theta=fixed_theta)
    enc = vec.reset_all()

    L, N = ppo.rollout_steps, ppo.n_envs
    d_in = spec.input_dim
    A = spec.action_dim

    ep_logger = _EpisodeLogger(out / "episodes.jsonl" if out else None,
                               ppo.episode_log_every)

    log_rows: list[TrainLogRow] = []
    returns_window: list[float] = []
    best_smoothed = -np.inf
    updates_since_best = 0
    aborted = 0
    env_steps = 0
    update = 0
    t0 = time.time()
    last_good: np.ndarray = net.params.flat.copy()
    stopped_early = False

    # Running raw (unscaled) returns per env for logging.
    raw_return_acc = np.zeros(N)
    finished_returns: list[float] = []

    n_updates = max(1, ppo.total_steps // (L * N))
    for update in range(1, n_updates + 1):
        buf_obs = np.empty((L, N, d_in))
        buf_act = np.empty((L, N, A))
        buf_logp = np.empty((L, N))
        buf_rew = np.empty((L, N))
        buf_val = np.empty((L, N))
        buf_done = np.zeros((L, N))

        for t in range(L):
            mean, std, value = net.forward(enc)
            actions = np.empty((N, A))
            for i in range(N):
                actions[i] = gaussian_sample(mean[i], std, vec.envs[i].action_rng)
            logp = gaussian_log_prob(actions, mean, std)
            buf_obs[t] = enc
            buf_act[t] = actions
            buf_logp[t] = logp
            buf_val[t] = value
            for i, env in enumerate(vec.envs):
                a = np.clip(actions[i], -1.0, 1.0)
                try:
                    enc_i, r, done, _ = env.step(a)
                except EpisodeAborted:
                    aborted += 1
                    raw_return_acc[i] = 0.0
                    enc_i, r, done = env.reset(), 0.0, False
                    buf_done[t, i] = 1.0
                    buf_rew[t, i] = 0.0
                    enc[i] = enc_i
                    continue
                buf_rew[t, i] = r * ppo.reward_scale
                raw_return_acc[i] += r
                if done:
                    ep_logger.log(env.episode_record())
                    finished_returns.append(raw_return_acc[i])
                    raw_return_acc[i] = 0.0
                    buf_done[t, i] = 1.0
                    enc_i = env.reset()
                enc[i] = enc_i
            env_steps += N

        _, _, last_values = net.forward(enc)
        adv, returns = compute_gae(buf_rew, buf_val, buf_done, last_values,
                                   ppo.gamma, ppo.gae_lambda)

        flat_obs = buf_obs.reshape(L * N, d_in)
        flat_act = buf_act.reshape(L * N, A)
        flat_logp = buf_logp.reshape(L * N)
        flat_adv = adv.reshape(L * N)
        flat_ret = returns.reshape(L * N)
        flat_adv = (flat_adv - flat_adv.mean()) / (flat_adv.std() + 1e-8)

        policy_losses, value_losses, entropies, clip_fracs = [], [], [], []
        diverged = False
        B = L * N
        mb = min(ppo.minibatch_size, B)
        for _ in range(ppo.epochs):
            order = shuffle_rng.permutation(B)
            for start in range(0, B, mb):
                idx = order[start:start + mb]
                xb = flat_obs[idx]
                ab = flat_act[idx]
                advb = flat_adv[idx]
                retb = flat_ret[idx]
                logp_old = flat_logp[idx]

                mean, std, value = net.forward(xb)
                z = (ab - mean) / std
                logp = -0.5 * (z ** 2).sum(axis=1) - np.log(std).sum() \
                    - 0.5 * np.log(2 * np.pi) * A
                ratio = np.exp(logp - logp_old)
                unclipped = ratio * advb
                clipped = np.clip(ratio, 1 - ppo.clip_eps, 1 + ppo.clip_eps) * advb
                take_unclipped = unclipped <= clipped
                surrogate = np.minimum(unclipped, clipped)
                policy_loss = -surrogate.mean()
                verr = value - retb
                value_loss = 0.5 * float((verr ** 2).mean())
                entropy = gaussian_entropy(std)
                loss = policy_loss + ppo.value_coef * value_loss \
                    - ppo.entropy_coef * entropy
                if not np.isfinite(loss):
                    diverged = True
                    break

                mean_ratio = float(ratio.mean())
                if not (1 - 2 * ppo.clip_eps) <= mean_ratio <= (1 + 2 * ppo.clip_eps):
                    import logging

                    logging.getLogger(__name__).warning(
                        "minibatch mean probability ratio %.3f drifted outside "
                        "[%.2f, %.2f]", mean_ratio,
                        1 - 2 * ppo.clip_eps, 1 + 2 * ppo.clip_eps)

                m = idx.size
                # d(policy_loss)/d(logp) flows through the unclipped branch only.
                dlogp = np.where(take_unclipped, -ratio * advb, 0.0) / m
                dmean = dlogp[:, None] * (z / std)
                dlogstd_policy = (dlogp[:, None] * (z ** 2 - 1.0)).sum(axis=0)
                # The clipped branch still depends on log-std through ratio's
                # clip bound derivative being zero: nothing to add there.
                dvalue = ppo.value_coef * verr / m
                dlogstd = dlogstd_policy - ppo.entropy_coef * np.ones(A)

                net.zero_grad()
                net.backward(dmean, dvalue, dlogstd)
                g = net.params.grad
                gn = float(np.sqrt((g ** 2).sum()))
                if ppo.max_grad_norm > 0 and gn > ppo.max_grad_norm:
                    g *= ppo.max_grad_norm / gn
                opt.step(net.params.flat, g)

                policy_losses.append(float(policy_loss))
                value_losses.append(value_loss)
                entropies.append(entropy)
                clip_fracs.append(float((~take_unclipped).mean()))
            if diverged:
                break

        if diverged:
            net.params.flat[:] = last_good
            stopped_early = True
            break
        last_good = net.params.flat.copy()

        mean_return = float(np.mean(finished_returns[-200:])) if finished_returns else 0.0
        row = TrainLogRow(
            update=update, env_steps=env_steps, episodes=ep_logger.count,
            mean_return=mean_return,
            policy_loss=float(np.mean(policy_losses)) if policy_losses else np.nan,
            value_loss=float(np.mean(value_losses)) if value_losses else np.nan,
            entropy=float(np.mean(entropies)) if entropies else np.nan,
            clip_fraction=float(np.mean(clip_fracs)) if clip_fracs else np.nan,
            wall_time=time.time() - t0)
        log_rows.append(row)
        if log_fn is not None:
            log_fn(row)

        returns_window.append(mean_return)
        smoothed = float(np.mean(returns_window[-10:]))
        if smoothed > best_smoothed + 1e-9:
            best_smoothed = smoothed
            updates_since_best = 0
        else:
            updates_since_best += 1
        if updates_since_best >= ppo.patience_updates:
            stopped_early = True
            break

        if out is not None and update % ppo.checkpoint_every == 0:
            _write_checkpoint(out / "policy.json", config, net, ppo, seed,
                              env_steps, log_rows)

    ep_logger.close()
    ckpt = _make_checkpoint(config, net, ppo, seed, env_steps, log_rows)
    if out is not None:
        ckpt.save(out / "policy.json")
        _write_log_csv(out / "train_log.csv", log_rows)
    return TrainResult(checkpoint=ckpt, log=log_rows, aborted_episodes=aborted,
                       wall_time=time.time() - t0, env_steps=env_steps,
                       stopped_early=stopped_early)


def _make_checkpoint(config, net, ppo, seed, env_steps, log_rows) -> PolicyCheckpoint:
    return PolicyCheckpoint(
        scenario_id=config.scenario, net=net,
        train_meta={
            "seed": seed,
            "env_steps": env_steps,
            "updates": len(log_rows),
            "final_mean_return": log_rows[-1].mean_return if log_rows else None,
            "ppo": {k: getattr(ppo, k) for k in PpoConfig.__dataclass_fields__},
        })


def _write_checkpoint(path, config, net, ppo, seed, env_steps, log_rows) -> None:
    _make_checkpoint(config, net, ppo, seed, env_steps, log_rows).save(path)


def _write_log_csv(path, rows: list[TrainLogRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(TrainLogRow.__dataclass_fields__))
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_dict())


def policy_fn_from_net(net: PolicyValueNet):
    def fn(enc: np.ndarray):
        mean, std, _ = net.forward(np.atleast_2d(enc))
        return mean[0], std
    return fn
