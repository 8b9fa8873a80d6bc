"""Reward computation: autocorrelation-based oscillation scoring, steady-state
yield, growth-constrained distance-to-optimum, and training-time reward
normalization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import (ActionBounds, LatentParams, Observation, PriorSpec,
                   Trajectory, sample_prior)


# ---------------------------------------------------------------------------
# Reward specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class YieldReward:
    """Reward is the observed steady-state expression itself."""

    kind: str = "yield"

    def to_json(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class ConstrainedYieldReward:
    """Distance-to-optimal-action reward for the growth-constrained study.

    The optimal action comes from a regressor over the latent parameters, so
    this reward needs theta at training time (the policy itself never sees it).
    """

    threshold: float = 0.8
    kind: str = "constrained_yield"

    def to_json(self) -> dict:
        return {"kind": self.kind, "threshold": self.threshold}


@dataclass(frozen=True)
class OscillatorReward:
    """R = -(f - f_star)^2 + lambda_w * C(tau2), floor when no oscillation."""

    f_star: float
    lambda_w: float = 0.3
    floor: float = -1.0
    kind: str = "oscillator"

    def to_json(self) -> dict:
        return {"kind": self.kind, "f_star": self.f_star,
                "lambda_w": self.lambda_w, "floor": self.floor}


@dataclass(frozen=True)
class PeakValueReward:
    """R = C(tau2): oscillation regularity alone (fixed-parameter study)."""

    floor: float = -1.0
    kind: str = "peak_value"

    def to_json(self) -> dict:
        return {"kind": self.kind, "floor": self.floor}


@dataclass(frozen=True)
class QuadraticBanditReward:
    """Test-bench reward R = -(a - target)^2 over a scalar physical action."""

    target: float = 0.3
    kind: str = "quadratic_bandit"

    def to_json(self) -> dict:
        return {"kind": self.kind, "target": self.target}


RewardSpec = (YieldReward | ConstrainedYieldReward | OscillatorReward
              | PeakValueReward | QuadraticBanditReward)


def reward_spec_from_json(obj: Mapping) -> RewardSpec:
    kind = obj.get("kind")
    if kind == "yield":
        return YieldReward()
    if kind == "constrained_yield":
        return ConstrainedYieldReward(threshold=float(obj.get("threshold", 0.8)))
    if kind == "oscillator":
        return OscillatorReward(f_star=float(obj["f_star"]),
                                lambda_w=float(obj.get("lambda_w", 0.3)),
                                floor=float(obj.get("floor", -1.0)))
    if kind == "peak_value":
        return PeakValueReward(floor=float(obj.get("floor", -1.0)))
    if kind == "quadratic_bandit":
        return QuadraticBanditReward(target=float(obj.get("target", 0.3)))
    raise ValueError(f"unknown reward kind {kind!r}")


# ---------------------------------------------------------------------------
# Autocorrelation and frequency estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AutocorrResult:
    lags: np.ndarray      # lag times, starting at 0
    C: np.ndarray         # normalized autocorrelation values
    tau2: float           # lag of the second peak (nan when invalid)
    C_tau2: float         # value at the second peak (nan when invalid)
    valid: bool


def normalized_autocorrelation(traj: Trajectory) -> AutocorrResult:
    """Biased, mean-subtracted autocorrelation normalized by its lag-0 value.

    The "second peak" (lag 0 being the first) is the first strict, positive
    local maximum after the first crossing below zero; requiring positivity
    keeps sampling-noise wiggles in the negative trough from masquerading as
    the oscillation peak. Signals whose correlation never crosses zero or
    never turns back up are flagged invalid.
    """
    x = traj.values
    n = x.size
    if n < 16:
        raise ValueError("autocorrelation needs at least 16 samples")
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    lags = traj.dt * np.arange(n)
    if denom <= 0.0:
        # Constant signal: correlation undefined, flagged rather than NaN-filled.
        return AutocorrResult(lags=lags, C=np.zeros(n), tau2=np.nan,
                              C_tau2=np.nan, valid=False)
    c = np.correlate(xc, xc, mode="full")[n - 1:] / denom

    crossing = None
    for k in range(1, n):
        if c[k] < 0.0:
            crossing = k
            break
    tau2 = np.nan
    c_tau2 = np.nan
    valid = False
    if crossing is not None:
        for k in range(max(crossing, 1), n - 1):
            if c[k] > 0.0 and c[k] > c[k - 1] and c[k] > c[k + 1]:
                # Parabolic sub-bin refinement of the peak location keeps the
                # frequency estimate from quantizing to the lag grid.
                denom = c[k - 1] - 2.0 * c[k] + c[k + 1]
                shift = 0.5 * (c[k - 1] - c[k + 1]) / denom if denom != 0.0 else 0.0
                shift = float(np.clip(shift, -0.5, 0.5))
                tau2 = float((k + shift) * traj.dt)
                c_tau2 = float(c[k])
                valid = True
                break
    return AutocorrResult(lags=lags, C=c, tau2=tau2, C_tau2=c_tau2, valid=valid)


def estimate_frequency(traj: Trajectory) -> float:
    """Oscillation frequency 1/tau2 from the autocorrelation second peak.

    Returns NaN for signals without a detectable oscillation; reward paths
    map that onto their floor penalty.
    """
    ac = normalized_autocorrelation(traj)
    if not ac.valid:
        return float("nan")
    return 1.0 / ac.tau2


# ---------------------------------------------------------------------------
# Reward functions
# ---------------------------------------------------------------------------


def reward_yield(obs: Observation) -> float:
    if obs.scalar is None:
        raise ValueError("yield reward expects a scalar observation")
    return float(obs.scalar[0])


def reward_oscillator(traj: Trajectory, spec: OscillatorReward) -> float:
    ac = normalized_autocorrelation(traj)
    if not ac.valid:
        return spec.floor
    f = 1.0 / ac.tau2
    return -((f - spec.f_star) ** 2) + spec.lambda_w * ac.C_tau2


def reward_peak_value(traj: Trajectory, spec: PeakValueReward) -> float:
    ac = normalized_autocorrelation(traj)
    if not ac.valid:
        return spec.floor
    return float(ac.C_tau2)


def reward_constrained(a_norm: float, theta: LatentParams,
                       regressor: "OptimalActionRegressor") -> float:
    """Negative absolute distance (in normalized action units) to the
    regressor's optimal action for these latents. Training-time only."""
    a_star = regressor.predict(theta)
    return -abs(float(a_norm) - a_star)


# ---------------------------------------------------------------------------
# Grid oracle for the growth-constrained optimum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridOptimum:
    a_star_norm: float       # normalized action in [-1, 1]
    a_star_phys: float
    feasible: bool           # False when no grid point met the growth constraint
    gfp: np.ndarray
    growth_rel: np.ndarray   # growth relative to the uninduced culture


def grid_optimal_action(theta: LatentParams, bounds: ActionBounds,
                        threshold: float = 0.8, n_grid: int = 101,
                        settings=None) -> GridOptimum:
    """Best induction under the relative-growth constraint, by grid search.

    Growth is measured relative to the uninduced steady state for the same
    latents, matching how a threshold like 0.8 is meaningful across hosts.
    If no grid point satisfies the constraint the point of maximal growth is
    returned, flagged infeasible.
    """
    from . import hostaware

    if bounds.dim != 1:
        raise ValueError("grid search expects the scalar induction action")
    if settings is None:
        settings = hostaware.HostSimSettings()
    grid = np.linspace(bounds.lo[0], bounds.hi[0], n_grid)
    gfp, lam = hostaware.response_curve(theta, grid, settings)
    lam0 = lam[0] if grid[0] == 0.0 else hostaware.simulate_to_steady_state(
        theta, 0.0, settings).lambda_ss
    if lam0 <= 0:
        raise hostaware.SimulationError("uninduced growth is nonpositive")
    growth_rel = lam / lam0
    ok = growth_rel >= threshold
    if ok.any():
        idx = int(np.argmax(np.where(ok, gfp, -np.inf)))
        feasible = True
    else:
        idx = int(np.argmax(growth_rel))
        feasible = False
    a_phys = float(grid[idx])
    a_norm = float(2.0 * (a_phys - bounds.lo[0]) / (bounds.hi[0] - bounds.lo[0]) - 1.0)
    return GridOptimum(a_star_norm=a_norm, a_star_phys=a_phys, feasible=feasible,
                       gfp=gfp, growth_rel=growth_rel)


# ---------------------------------------------------------------------------
# Optimal-action regressor (theta -> a*)
# ---------------------------------------------------------------------------


@dataclass
class OptimalActionRegressor:
    """Small dense network predicting the constrained-optimal action from theta.

    Inputs are prior-standardized coordinates; the output is clipped to the
    normalized action interval.
    """

    prior: PriorSpec
    net: "object"            # nets.Network (dense trunk + scalar head)
    validation_mae: float
    train_mae: float
    meta: dict = field(default_factory=dict)

    def predict(self, theta: LatentParams) -> float:
        x = self.prior.standardize(theta).reshape(1, -1)
        y = float(self.net.forward(x)[0, 0])
        return float(np.clip(y, -1.0, 1.0))

    def predict_standardized(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.clip(self.net.forward(z)[:, 0], -1.0, 1.0)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "kind": "optimal_action_regressor",
            "prior": self.prior.to_json(),
            "net": self.net.to_json(),
            "validation_mae": self.validation_mae,
            "train_mae": self.train_mae,
            "meta": self.meta,
        }

    @staticmethod
    def from_json(obj: Mapping) -> "OptimalActionRegressor":
        from . import nets

        return OptimalActionRegressor(
            prior=PriorSpec.from_json(obj["prior"]),
            net=nets.Network.from_json(obj["net"]),
            validation_mae=float(obj["validation_mae"]),
            train_mae=float(obj["train_mae"]),
            meta=dict(obj.get("meta", {})),
        )


class RegressorTrainingError(RuntimeError):
    pass


def train_optimal_action_regressor(prior: PriorSpec, bounds: ActionBounds,
                                   rng: np.random.Generator,
                                   n_samples: int = 100,
                                   threshold: float = 0.8,
                                   n_grid: int = 101,
                                   mae_ceiling_cells: float = 2.0,
                                   hidden=(64, 64), epochs: int = 4000,
                                   lr: float = 3e-3) -> OptimalActionRegressor:
    """Fit theta -> a* on grid-search labels; 20% of draws held out.

    Raises when the held-out MAE exceeds the configured ceiling (in units of
    grid cells of the normalized action interval).
    """
    from . import nets

    thetas = [sample_prior(prior, rng) for _ in range(n_samples)]
    labels = np.empty(n_samples)
    flagged = 0
    for i, th in enumerate(thetas):
        opt = grid_optimal_action(th, bounds, threshold, n_grid)
        labels[i] = opt.a_star_norm
        flagged += (not opt.feasible)

    X = np.stack([prior.standardize(th) for th in thetas])
    n_val = max(1, int(round(0.2 * n_samples)))
    idx = rng.permutation(n_samples)
    val_idx, tr_idx = idx[:n_val], idx[n_val:]

    net = nets.Network(nets.dense_spec(in_dim=len(prior), hidden=list(hidden), out_dim=1),
                       seed=int(rng.integers(2 ** 31)))
    opt_state = nets.Adam(net.params.flat.size, lr=lr)
    Xtr, ytr = X[tr_idx], labels[tr_idx]
    best = None
    best_val = np.inf
    for epoch in range(epochs):
        pred = net.forward(Xtr)[:, 0]
        err = pred - ytr
        net.zero_grad()
        gout = (2.0 / err.size) * err
        net.backward(gout.reshape(-1, 1))
        opt_state.step(net.params.flat, net.params.grad)
        if epoch % 50 == 0 or epoch == epochs - 1:
            val_pred = np.clip(net.forward(X[val_idx])[:, 0], -1, 1)
            val_mae = float(np.abs(val_pred - labels[val_idx]).mean())
            if val_mae < best_val:
                best_val = val_mae
                best = net.params.flat.copy()
    if best is not None:
        net.params.flat[:] = best

    val_pred = np.clip(net.forward(X[val_idx])[:, 0], -1, 1)
    tr_pred = np.clip(net.forward(Xtr)[:, 0], -1, 1)
    val_mae = float(np.abs(val_pred - labels[val_idx]).mean())
    tr_mae = float(np.abs(tr_pred - ytr).mean())
    cell = 2.0 / (n_grid - 1)
    ceiling = mae_ceiling_cells * cell
    if val_mae > ceiling:
        raise RegressorTrainingError(
            f"regressor validation MAE {val_mae:.4f} exceeds ceiling {ceiling:.4f} "
            f"({mae_ceiling_cells} grid cells)")
    return OptimalActionRegressor(
        prior=prior, net=net, validation_mae=val_mae, train_mae=tr_mae,
        meta={"n_samples": n_samples, "n_grid": n_grid, "threshold": threshold,
              "infeasible_draws": flagged, "mae_ceiling": ceiling})


# ---------------------------------------------------------------------------
# Per-theta reward normalizer for the oscillator scenarios
# ---------------------------------------------------------------------------


@dataclass
class RewardNormalizer:
    """Rescales raw oscillator rewards by the best reward achievable near the
    episode's latents, estimated once over presampled prior draws.

    Lookup is nearest-neighbor in prior-standardized coordinates; scales are
    clamped below to keep the rescaling positive (ordering-preserving).
    """

    prior: PriorSpec
    points: np.ndarray        # (n, d) standardized coordinates
    best: np.ndarray          # (n,) best-reward estimates
    scale_min: float
    floor: float              # data-driven undefined-frequency penalty

    def scale_for(self, theta: LatentParams) -> float:
        z = self.prior.standardize(theta)
        i = int(np.argmin(((self.points - z) ** 2).sum(axis=1)))
        return float(max(self.best[i], self.scale_min))

    def normalize(self, reward: float, theta: LatentParams) -> float:
        return reward / self.scale_for(theta)

    def to_json(self) -> dict:
        return {
            "version": 1,
            "kind": "reward_normalizer",
            "prior": self.prior.to_json(),
            "points": self.points.tolist(),
            "best": self.best.tolist(),
            "scale_min": self.scale_min,
            "floor": self.floor,
        }

    @staticmethod
    def from_json(obj: Mapping) -> "RewardNormalizer":
        return RewardNormalizer(
            prior=PriorSpec.from_json(obj["prior"]),
            points=np.asarray(obj["points"], dtype=float),
            best=np.asarray(obj["best"], dtype=float),
            scale_min=float(obj["scale_min"]),
            floor=float(obj["floor"]),
        )


def build_reward_normalizer(prior: PriorSpec, bounds: ActionBounds,
                            spec: OscillatorReward | PeakValueReward,
                            sim_settings, rng: np.random.Generator,
                            n_theta: int = 500, n_actions: int = 64,
                            n_seeds: int = 2, scale_min: float = 0.05,
                            fixed: dict[str, float] | None = None,
                            progress=None) -> RewardNormalizer:
    """Estimate per-theta best achievable reward by random action search."""
    from . import repressilator as rep

    points = np.empty((n_theta, len(prior)))
    best = np.empty(n_theta)
    defined_rewards: list[float] = []
    for i in range(n_theta):
        theta = sample_prior(prior, rng)
        points[i] = prior.standardize(theta)
        best_i = -np.inf
        for _ in range(n_actions):
            a_norm = rng.uniform(-1.0, 1.0, size=bounds.dim)
            a_phys = bounds.lo + (a_norm + 1.0) / 2.0 * (bounds.hi - bounds.lo)
            vals = np.empty(n_seeds)
            for s in range(n_seeds):
                seed = int(rng.integers(2 ** 63))
                obs = rep.sample_trajectory(theta, a_phys, bounds, seed,
                                            sim_settings, fixed)
                traj = rep.trim_burn_in(obs.series, sim_settings.burn_in_frac)
                ac = normalized_autocorrelation(traj)
                if not ac.valid:
                    vals[s] = np.nan
                elif isinstance(spec, OscillatorReward):
                    f = 1.0 / ac.tau2
                    vals[s] = -((f - spec.f_star) ** 2) + spec.lambda_w * ac.C_tau2
                else:
                    vals[s] = ac.C_tau2
            defined = vals[np.isfinite(vals)]
            defined_rewards.extend(defined.tolist())
            if defined.size == n_seeds:
                best_i = max(best_i, float(defined.mean()))
        if not np.isfinite(best_i):
            best_i = scale_min
        best[i] = best_i
        if progress is not None and (i + 1) % 25 == 0:
            progress(i + 1, n_theta)
    if defined_rewards:
        floor = float(np.percentile(defined_rewards, 1.0))
    else:
        floor = -1.0
    return RewardNormalizer(prior=prior, points=points, best=best,
                            scale_min=scale_min, floor=floor)


# ---------------------------------------------------------------------------
# Artifact (de)serialization
# ---------------------------------------------------------------------------


def save_artifact(obj, path) -> None:
    import os

    os.makedirs(os.path.dirname(str(path)) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj.to_json(), fh)


def load_regressor(path) -> OptimalActionRegressor:
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("kind") != "optimal_action_regressor":
        raise ValueError(f"{path} is not a regressor artifact")
    return OptimalActionRegressor.from_json(obj)


def load_normalizer(path) -> RewardNormalizer:
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("kind") != "reward_normalizer":
        raise ValueError(f"{path} is not a reward normalizer artifact")
    return RewardNormalizer.from_json(obj)
