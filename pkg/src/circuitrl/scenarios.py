"""Declarative scenario configurations.

A scenario file is a JSON document with keys ``scenario``, ``horizon``,
``action_bounds``, ``prior``, ``reward``, ``simulation`` plus the
observation/network blocks; the shipped presets live in ``data/scenarios``.
Training, evaluation, and the advisory service all load the same file, so a
deployed policy is always paired with the exact configuration it was trained
under.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

from .core import ActionBounds, ConfigError, PriorSpec
from .hostaware import HostSimSettings
from .nets import NetSpec
from .repressilator import RepressilatorSimSettings
from .rewards import RewardSpec, reward_spec_from_json

SCENARIO_IDS = (
    "hostaware",
    "hostaware-growth",
    "repressilator",
    "repressilator-simple",
    "repressilator-noepi",
    "bandit-quadratic",
)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    horizon: int
    bounds: ActionBounds
    prior: PriorSpec
    reward: RewardSpec
    obs_kind: str                    # "scalar" | "series"
    obs_dim: int
    simulation: dict = field(default_factory=dict)
    fixed_params: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    needs_regressor: bool = False
    needs_normalizer: bool = False

    def validate(self) -> None:
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        self.prior.validate()
        if self.obs_kind not in ("scalar", "series"):
            raise ConfigError(f"unknown observation kind {self.obs_kind!r}")
        if self.obs_kind == "scalar" and self.obs_dim not in (1, 2):
            raise ConfigError("scalar observations carry 1 or 2 values")

    # -- simulator settings ---------------------------------------------------

    def host_settings(self) -> HostSimSettings:
        sim = self.simulation
        return HostSimSettings(
            t_end=float(sim.get("t_end", 1e5)),
            ss_tol=float(sim.get("ss_tol", 1e-8)),
            rtol=float(sim.get("rtol", 1e-6)),
            atol=float(sim.get("atol", 1e-9)),
        )

    def repressilator_settings(self) -> RepressilatorSimSettings:
        sim = self.simulation
        return RepressilatorSimSettings(
            t_end=float(sim.get("t_end", 100.0)),
            sample_dt=float(sim.get("sample_dt", 0.5)),
            burn_in_frac=float(sim.get("burn_in_frac", 0.2)),
            event_cap=int(sim.get("event_cap", 100_000_000)),
            init_m=tuple(sim.get("init_m", (0, 0, 0))),
            init_p=tuple(sim.get("init_p", (40, 20, 10))),
        )

    def net_spec(self) -> NetSpec:
        nw = self.network
        return NetSpec(
            horizon=self.horizon,
            obs_dim=self.obs_dim,
            action_dim=self.bounds.dim,
            encoder=nw.get("encoder", "identity"),
            obs_transform=nw.get("obs_transform", "none"),
            obs_scale=float(nw.get("obs_scale", 1.0)),
            channels=tuple(nw.get("channels", (16, 32))),
            kernel=int(nw.get("kernel", 9)),
            strides=tuple(nw.get("strides", (2, 2))),
            padding=nw.get("padding", "zero"),
            trunk=tuple(nw.get("trunk", (128, 64))),
        )

    # -- (de)serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "scenario": self.scenario,
            "horizon": self.horizon,
            "action_bounds": self.bounds.to_json(),
            "prior": self.prior.to_json(),
            "reward": self.reward.to_json(),
            "observation": {"kind": self.obs_kind, "dim": self.obs_dim},
            "simulation": self.simulation,
            "fixed_params": self.fixed_params,
            "network": self.network,
            "train": self.train,
            "artifacts": {"regressor": self.needs_regressor,
                          "normalizer": self.needs_normalizer},
        }

    @staticmethod
    def from_json(obj: Mapping) -> "ScenarioConfig":
        try:
            arts = obj.get("artifacts", {})
            cfg = ScenarioConfig(
                scenario=obj["scenario"],
                horizon=int(obj["horizon"]),
                bounds=ActionBounds.from_dict(obj["action_bounds"]),
                prior=PriorSpec.from_json(obj.get("prior", {})),
                reward=reward_spec_from_json(obj["reward"]),
                obs_kind=obj["observation"]["kind"],
                obs_dim=int(obj["observation"]["dim"]),
                simulation=dict(obj.get("simulation", {})),
                fixed_params=dict(obj.get("fixed_params", {})),
                network=dict(obj.get("network", {})),
                train=dict(obj.get("train", {})),
                needs_regressor=bool(arts.get("regressor", False)),
                needs_normalizer=bool(arts.get("normalizer", False)),
            )
        except KeyError as exc:
            raise ConfigError(f"scenario config missing key: {exc}") from exc
        cfg.validate()
        return cfg


def load_scenario(name_or_path: str) -> ScenarioConfig:
    """Load a shipped scenario by id, or any scenario JSON file by path."""
    import os

    if os.path.exists(name_or_path):
        with open(name_or_path) as fh:
            return ScenarioConfig.from_json(json.load(fh))
    if name_or_path in SCENARIO_IDS:
        text = resources.files("circuitrl.data.scenarios").joinpath(
            f"{name_or_path}.json").read_text()
        return ScenarioConfig.from_json(json.loads(text))
    raise ConfigError(f"unknown scenario {name_or_path!r} "
                      f"(known: {', '.join(SCENARIO_IDS)})")


def list_scenarios() -> list[ScenarioConfig]:
    return [load_scenario(s) for s in SCENARIO_IDS]
