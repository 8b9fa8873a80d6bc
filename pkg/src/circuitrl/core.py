"""Shared domain vocabulary: latent parameters, priors, actions, observations,
histories and episode records.

Everything here is an immutable value object once constructed; random
generators are always passed in, never stored globally.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np


class ConfigError(ValueError):
    """Malformed scenario or prior configuration."""


class ShapeError(ValueError):
    """Observation or encoding shape does not match the scenario."""


# ---------------------------------------------------------------------------
# Priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def validate(self) -> None:
        if not self.lo < self.hi:
            raise ConfigError(f"Uniform bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.lo, self.hi))

    def standardize(self, x: float) -> float:
        """Map a value to [0, 1] by the prior's support."""
        return (x - self.lo) / (self.hi - self.lo)

    def from_normalized(self, z: float) -> float:
        """Map z in [-1, 1] to the support (used for oracle grid points)."""
        return self.lo + (z + 1.0) / 2.0 * (self.hi - self.lo)

    def to_json(self) -> dict:
        return {"dist": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class TruncatedNormal:
    mean: float
    stddev: float
    lo: float
    hi: float

    def validate(self) -> None:
        if not self.lo < self.hi:
            raise ConfigError(f"TruncatedNormal bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if not self.stddev > 0:
            raise ConfigError(f"TruncatedNormal stddev must be > 0, got {self.stddev}")
        # Truncation interval must carry non-negligible prior mass, otherwise
        # rejection sampling stalls.
        from scipy.stats import norm

        mass = norm.cdf((self.hi - self.mean) / self.stddev) - norm.cdf((self.lo - self.mean) / self.stddev)
        if mass <= 1e-12:
            raise ConfigError("TruncatedNormal truncation interval has ~zero prior mass")

    def sample(self, rng: np.random.Generator) -> float:
        # Rejection from the untruncated normal; acceptance is fine for the
        # intervals used here (about 68% for (1,1,0,2)).
        while True:
            x = rng.normal(self.mean, self.stddev)
            if self.lo <= x <= self.hi:
                return float(x)

    def standardize(self, x: float) -> float:
        return (x - self.lo) / (self.hi - self.lo)

    def from_normalized(self, z: float) -> float:
        return self.lo + (z + 1.0) / 2.0 * (self.hi - self.lo)

    def to_json(self) -> dict:
        return {
            "dist": "truncated_normal",
            "mean": self.mean,
            "stddev": self.stddev,
            "lo": self.lo,
            "hi": self.hi,
        }


Distribution = Uniform | TruncatedNormal


def distribution_from_json(obj: Mapping) -> Distribution:
    kind = obj.get("dist")
    if kind == "uniform":
        return Uniform(float(obj["lo"]), float(obj["hi"]))
    if kind == "truncated_normal":
        return TruncatedNormal(float(obj["mean"]), float(obj["stddev"]), float(obj["lo"]), float(obj["hi"]))
    raise ConfigError(f"unknown distribution kind: {kind!r}")


@dataclass(frozen=True)
class PriorSpec:
    """Ordered per-parameter prior distributions."""

    entries: tuple[tuple[str, Distribution], ...]

    @staticmethod
    def from_dict(d: Mapping[str, Distribution]) -> "PriorSpec":
        return PriorSpec(tuple(d.items()))

    def validate(self) -> None:
        for _, dist in self.entries:
            dist.validate()

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, name: str) -> Distribution:
        for n, d in self.entries:
            if n == name:
                return d
        raise KeyError(name)

    def standardize(self, theta: "LatentParams") -> np.ndarray:
        """Map theta onto [0, 1]^d using each parameter's support."""
        return np.array([dist.standardize(theta[name]) for name, dist in self.entries])

    def from_normalized(self, z: Sequence[float]) -> "LatentParams":
        """Build a parameter point from normalized coordinates in [-1, 1]^d."""
        if len(z) != len(self.entries):
            raise ShapeError(f"expected {len(self.entries)} coordinates, got {len(z)}")
        vals = [dist.from_normalized(float(zi)) for (_, dist), zi in zip(self.entries, z)]
        return LatentParams(self.names, np.asarray(vals, dtype=float))

    def to_json(self) -> dict:
        return {name: dist.to_json() for name, dist in self.entries}

    @staticmethod
    def from_json(obj: Mapping) -> "PriorSpec":
        return PriorSpec(tuple((name, distribution_from_json(d)) for name, d in obj.items()))


def sample_prior(spec: PriorSpec, rng: np.random.Generator) -> "LatentParams":
    """Draw one latent parameter vector; reproducible for a fixed generator state."""
    spec.validate()
    values = np.array([dist.sample(rng) for _, dist in spec.entries], dtype=float)
    return LatentParams(spec.names, values)


# ---------------------------------------------------------------------------
# Latent parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatentParams:
    """Named vector of hidden simulator parameters, fixed for one episode."""

    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.names),):
            raise ShapeError(f"{len(self.names)} names but value shape {v.shape}")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))

    def __getitem__(self, name: str) -> float:
        try:
            return float(self.values[self.names.index(name)])
        except ValueError:
            raise KeyError(name) from None

    def __iter__(self) -> Iterator[tuple[str, float]]:
        return zip(self.names, (float(v) for v in self.values))

    def as_dict(self) -> dict[str, float]:
        return dict(self)

    @staticmethod
    def from_dict(d: Mapping[str, float]) -> "LatentParams":
        return LatentParams(tuple(d.keys()), np.array(list(d.values()), dtype=float))

    def to_json(self) -> dict:
        return self.as_dict()


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ActionBounds:
    """Per-dimension physical ranges for the normalized [-1, 1] action space."""

    names: tuple[str, ...]
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).copy()
        hi = np.asarray(self.hi, dtype=float).copy()
        if lo.shape != hi.shape or lo.shape != (len(self.names),):
            raise ShapeError("action bound arrays must match the name list")
        if np.any(lo >= hi):
            raise ConfigError("action bounds must satisfy lo < hi per dimension")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def dim(self) -> int:
        return len(self.names)

    @staticmethod
    def from_dict(d: Mapping[str, Sequence[float]]) -> "ActionBounds":
        names = tuple(d.keys())
        lo = np.array([d[n][0] for n in names], dtype=float)
        hi = np.array([d[n][1] for n in names], dtype=float)
        return ActionBounds(names, lo, hi)

    def to_json(self) -> dict:
        return {n: [float(l), float(h)] for n, l, h in zip(self.names, self.lo, self.hi)}


def scale_action(a_norm: np.ndarray, bounds: ActionBounds, *, warn: bool = False) -> np.ndarray:
    """Map normalized [-1, 1] coordinates to physical units (clipping outside)."""
    a = np.asarray(a_norm, dtype=float)
    if a.shape[-1] != bounds.dim:
        raise ShapeError(f"action has {a.shape[-1]} dims, bounds expect {bounds.dim}")
    if warn and np.any((a < -1.0 - 1e-12) | (a > 1.0 + 1e-12)):
        import logging

        logging.getLogger(__name__).warning("normalized action outside [-1, 1]; clipping: %s", a)
    a = np.clip(a, -1.0, 1.0)
    return bounds.lo + (a + 1.0) / 2.0 * (bounds.hi - bounds.lo)


def unscale_action(a_phys: np.ndarray, bounds: ActionBounds) -> np.ndarray:
    """Inverse of scale_action for in-range physical values."""
    a = np.asarray(a_phys, dtype=float)
    return 2.0 * (a - bounds.lo) / (bounds.hi - bounds.lo) - 1.0


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled abundance time series."""

    t0: float
    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        if v.ndim != 1 or v.size < 2:
            raise ShapeError("trajectory needs at least two samples")
        if not self.dt > 0:
            raise ShapeError("trajectory dt must be positive")
        if not np.all(np.isfinite(v)):
            raise ShapeError("trajectory values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)

    def to_json(self) -> dict:
        return {"t0": self.t0, "dt": self.dt, "values": self.values.tolist()}

    @staticmethod
    def from_json(obj: Mapping) -> "Trajectory":
        return Trajectory(float(obj["t0"]), float(obj["dt"]), np.asarray(obj["values"], dtype=float))


@dataclass(frozen=True)
class Observation:
    """Either a small vector of scalar readouts or a sampled trajectory."""

    scalar: np.ndarray | None = None
    series: Trajectory | None = None

    def __post_init__(self):
        if (self.scalar is None) == (self.series is None):
            raise ShapeError("observation must be exactly one of scalar or series")
        if self.scalar is not None:
            v = np.asarray(self.scalar, dtype=float).copy()
            if v.ndim != 1 or not (1 <= v.size <= 2):
                raise ShapeError("scalar observation must hold 1 or 2 values")
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ShapeError("scalar observation values must be finite and >= 0")
            v.setflags(write=False)
            object.__setattr__(self, "scalar", v)

    @property
    def is_series(self) -> bool:
        return self.series is not None

    def encoded(self) -> np.ndarray:
        """Flat numeric content (trajectory values or the scalar vector)."""
        if self.scalar is not None:
            return self.scalar
        return self.series.values

    def to_json(self) -> dict:
        if self.scalar is not None:
            return {"scalar": self.scalar.tolist()}
        return {"trajectory": self.series.to_json()}

    @staticmethod
    def from_json(obj: Mapping) -> "Observation":
        if "scalar" in obj:
            return Observation(scalar=np.asarray(obj["scalar"], dtype=float))
        if "trajectory" in obj:
            return Observation(series=Trajectory.from_json(obj["trajectory"]))
        raise ShapeError("observation JSON must contain 'scalar' or 'trajectory'")


# ---------------------------------------------------------------------------
# History
# ---------------------------------------------------------------------------


@dataclass
class History:
    """Chronological (action, observation) pairs with zero-padded encoding.

    The encoded layout is [o_1, a_1, o_2, a_2, ...] with one slot per horizon
    step; unused slots stay exactly zero.
    """

    capacity: int
    action_dim: int
    obs_dim: int
    entries: list[tuple[np.ndarray, Observation]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, action_norm: np.ndarray, obs: Observation) -> None:
        if len(self.entries) >= self.capacity:
            raise ShapeError("history is already at capacity")
        a = np.asarray(action_norm, dtype=float).copy()
        if a.shape != (self.action_dim,):
            raise ShapeError(f"action shape {a.shape} != ({self.action_dim},)")
        enc = obs.encoded()
        if enc.size != self.obs_dim:
            raise ShapeError(f"observation encodes to {enc.size} values, scenario expects {self.obs_dim}")
        self.entries.append((a, obs))

    @property
    def slot_dim(self) -> int:
        return self.obs_dim + self.action_dim

    @property
    def encoded_dim(self) -> int:
        return self.capacity * self.slot_dim

    def encode(self) -> np.ndarray:
        out = np.zeros(self.encoded_dim)
        for i, (a, o) in enumerate(self.entries):
            base = i * self.slot_dim
            out[base : base + self.obs_dim] = o.encoded()
            out[base + self.obs_dim : base + self.slot_dim] = a
        return out

    def copy(self) -> "History":
        return History(self.capacity, self.action_dim, self.obs_dim, list(self.entries))


def encode_history(h: History) -> np.ndarray:
    return h.encode()


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeStep:
    action_norm: np.ndarray
    observation: Observation
    reward: float

    def to_json(self) -> dict:
        return {
            "action": np.asarray(self.action_norm, dtype=float).tolist(),
            "observation": self.observation.to_json(),
            "reward": self.reward,
        }


@dataclass(frozen=True)
class EpisodeRecord:
    theta: LatentParams
    steps: tuple[EpisodeStep, ...]
    seed: int

    def __post_init__(self):
        if not all(np.isfinite(s.reward) for s in self.steps):
            raise ValueError("episode rewards must be finite")

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.reward for s in self.steps])

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())

    def to_json(self) -> dict:
        return {
            "theta": self.theta.to_json(),
            "seed": self.seed,
            "steps": [s.to_json() for s in self.steps],
        }

    def to_jsonl(self) -> str:
        return json.dumps(self.to_json())


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------


def rng_from_key(*key: int) -> np.random.Generator:
    """Deterministic generator derived from an integer key path.

    Two generators built from the same key are identical; sibling keys are
    statistically independent.
    """
    return np.random.default_rng(np.random.SeedSequence(list(key)))


def integer_seed(*key: int) -> int:
    """64-bit seed for kernels that take plain integer seeds."""
    return int(np.random.SeedSequence(list(key)).generate_state(1, np.uint64)[0])
