"""Exact stochastic simulation of the three-gene repressilator.

Twelve reactions over six species (mRNA m1..m3, protein p1..p3): per gene,
Hill-repressed transcription, catalytic translation, and first-order
degradation of both mRNA and protein. Gene i is repressed by the protein of
the cyclically previous gene (p3 -| gene1, p1 -| gene2, p2 -| gene3).

Simulation uses the Gillespie direct method with a self-contained xoshiro256+
generator so trajectories are bit-reproducible from an integer seed across
platforms and threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import ActionBounds, LatentParams, Observation, Trajectory

STATUS_OK = 0
STATUS_EVENT_CAP = 1

SPECIES = ("m1", "m2", "m3", "p1", "p2", "p3")


class SsaError(RuntimeError):
    pass


@dataclass(frozen=True)
class RepressilatorParams:
    # design (actions)
    k_X: float     # translation rate per mRNA
    k_m: float     # maximal transcription rate
    K: float       # repression threshold (molecules)
    # latent
    H: float       # Hill coefficient
    g_X: float     # protein dilution rate
    g_m: float     # mRNA dilution rate
    eps: float     # basal transcription fraction
    # initial counts
    m0: tuple[int, int, int] = (0, 0, 0)
    p0: tuple[int, int, int] = (40, 20, 10)

    def validate(self) -> None:
        # Zero design rates are degenerate but valid (they decouple reactions,
        # which the exactness tests rely on); latent rates stay positive.
        for name in ("k_X", "k_m"):
            if getattr(self, name) < 0:
                raise ValueError(f"repressilator rate {name} must be >= 0")
        for name in ("K", "H", "g_X", "g_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"repressilator rate {name} must be > 0")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("basal fraction eps must lie in (0, 1)")
        if any(c < 0 or int(c) != c for c in (*self.m0, *self.p0)):
            raise ValueError("initial counts must be nonnegative integers")


def propensities(state: np.ndarray, params: RepressilatorParams) -> np.ndarray:
    """The twelve reaction propensities for a state [m1,m2,m3,p1,p2,p3].

    Order: [alpha_1..3, translation_1..3, mRNA degradation_1..3,
    protein degradation_1..3].
    """
    s = np.asarray(state, dtype=float)
    if s.shape != (6,) or np.any(s < 0):
        raise ValueError("state must be six nonnegative counts")
    m = s[:3]
    p = s[3:]
    out = np.empty(12)
    for i in range(3):
        rep = p[(i + 2) % 3]
        hill = 1.0 / (1.0 + (rep / params.K) ** params.H)
        out[i] = params.k_m * (params.eps + (1.0 - params.eps) * hill)
        out[3 + i] = params.k_X * m[i]
        out[6 + i] = params.g_m * m[i]
        out[9 + i] = params.g_X * p[i]
    return out


@njit(cache=True, nogil=True, inline="always")
def _xoshiro_next(s):
    result = s[0] + s[3]
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = (s[3] << np.uint64(45)) | (s[3] >> np.uint64(19))
    return result


@njit(cache=True, nogil=True, inline="always")
def _uniform01(s):
    return float(_xoshiro_next(s) >> np.uint64(11)) * 1.1102230246251565e-16


@njit(cache=True, nogil=True)
def _seed_state(seed):
    s = np.empty(4, dtype=np.uint64)
    x = np.uint64(seed)
    for i in range(4):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        s[i] = z ^ (z >> np.uint64(31))
    return s


@njit(cache=True, nogil=True)
def ssa_kernel(k_X, k_m, K, H, g_X, g_m, eps, m0, p0,
               t_end, sample_dt, n_samples, event_cap, seed, record_idx):
    """Gillespie direct method; records species ``record_idx`` on a uniform grid.

    Propensities are updated incrementally: a fired reaction touches exactly
    one mRNA or one protein count, so at most one Hill term needs to be
    re-evaluated per event.
    """
    rng = _seed_state(seed)
    m = m0.copy()
    p = p0.copy()
    out = np.empty(n_samples)
    props = np.empty(12)

    # Gene i is repressed by p[(i+2) % 3]; changing p[i] affects gene (i+1) % 3.
    for i in range(3):
        rep = float(p[(i + 2) % 3])
        hill = 1.0 / (1.0 + (rep / K) ** H)
        props[i] = k_m * (eps + (1.0 - eps) * hill)
        props[3 + i] = k_X * m[i]
        props[6 + i] = g_m * m[i]
        props[9 + i] = g_X * p[i]

    t = 0.0
    grid_i = 0
    events = 0
    status = STATUS_OK

    while grid_i < n_samples:
        total = 0.0
        for r in range(12):
            total += props[r]

        if record_idx < 3:
            current = float(m[record_idx])
        else:
            current = float(p[record_idx - 3])

        if total <= 0.0:
            # Absorbing state: hold the current counts for the rest of the grid.
            while grid_i < n_samples:
                out[grid_i] = current
                grid_i += 1
            break

        u = _uniform01(rng)
        tau = -np.log(1.0 - u) / total
        t_next = t + tau

        while grid_i < n_samples and grid_i * sample_dt < t_next:
            out[grid_i] = current
            grid_i += 1
        if grid_i >= n_samples or t_next > t_end:
            while grid_i < n_samples:
                out[grid_i] = current
                grid_i += 1
            break

        pick = _uniform01(rng) * total
        acc = 0.0
        r = 11
        for j in range(12):
            acc += props[j]
            if pick < acc:
                r = j
                break

        if r < 3:
            i = r
            m[i] += 1
            props[3 + i] = k_X * m[i]
            props[6 + i] = g_m * m[i]
        elif r < 6:
            i = r - 3
            p[i] += 1
            props[9 + i] = g_X * p[i]
            j = (i + 1) % 3
            hill = 1.0 / (1.0 + (float(p[i]) / K) ** H)
            props[j] = k_m * (eps + (1.0 - eps) * hill)
        elif r < 9:
            i = r - 6
            m[i] -= 1
            props[3 + i] = k_X * m[i]
            props[6 + i] = g_m * m[i]
        else:
            i = r - 9
            p[i] -= 1
            props[9 + i] = g_X * p[i]
            j = (i + 1) % 3
            hill = 1.0 / (1.0 + (float(p[i]) / K) ** H)
            props[j] = k_m * (eps + (1.0 - eps) * hill)

        t = t_next
        events += 1
        if events >= event_cap:
            status = STATUS_EVENT_CAP
            break

    return out, status, events


def ssa_simulate(params: RepressilatorParams, t_end: float, sample_dt: float,
                 seed: int, event_cap: int = 100_000_000,
                 record: str = "p1") -> Trajectory:
    """Simulate one trajectory and sample it on the uniform grid t0=0, dt=sample_dt."""
    params.validate()
    if t_end <= 0 or sample_dt <= 0:
        raise ValueError("t_end and sample_dt must be positive")
    n_samples = int(np.floor(t_end / sample_dt)) + 1
    m0 = np.asarray(params.m0, dtype=np.int64)
    p0 = np.asarray(params.p0, dtype=np.int64)
    values, status, _ = ssa_kernel(
        params.k_X, params.k_m, params.K, params.H, params.g_X, params.g_m,
        params.eps, m0, p0, t_end, sample_dt, n_samples, event_cap,
        np.uint64(seed % (2 ** 64)), SPECIES.index(record))
    if status == STATUS_EVENT_CAP:
        raise SsaError(f"event cap {event_cap} exceeded before t_end={t_end}")
    return Trajectory(t0=0.0, dt=sample_dt, values=values)


@dataclass(frozen=True)
class RepressilatorSimSettings:
    t_end: float = 100.0
    sample_dt: float = 0.5
    burn_in_frac: float = 0.2
    event_cap: int = 100_000_000
    init_m: tuple[int, int, int] = (0, 0, 0)
    init_p: tuple[int, int, int] = (40, 20, 10)


def assemble_params(theta: LatentParams, action_phys: np.ndarray,
                    bounds: ActionBounds,
                    settings: RepressilatorSimSettings,
                    fixed: dict[str, float] | None = None) -> RepressilatorParams:
    """Combine latent draws, fixed overrides and a physical action vector."""
    values = dict(fixed or {})
    values.update(theta.as_dict())
    by_name = dict(zip(bounds.names, np.asarray(action_phys, dtype=float)))
    for key in ("k_X", "k_m", "K"):
        if key in by_name:
            values[key] = float(by_name[key])
    missing = {"k_X", "k_m", "K", "H", "g_X", "g_m", "eps"} - values.keys()
    if missing:
        raise KeyError(f"repressilator parameters missing: {sorted(missing)}")
    return RepressilatorParams(
        k_X=values["k_X"], k_m=values["k_m"], K=values["K"],
        H=values["H"], g_X=values["g_X"], g_m=values["g_m"], eps=values["eps"],
        m0=settings.init_m, p0=settings.init_p)


def sample_trajectory(theta: LatentParams, action_phys: np.ndarray,
                      bounds: ActionBounds, seed: int,
                      settings: RepressilatorSimSettings = RepressilatorSimSettings(),
                      fixed: dict[str, float] | None = None) -> Observation:
    """One stochastic observation of p1 for the given design and latents."""
    params = assemble_params(theta, action_phys, bounds, settings, fixed)
    traj = ssa_simulate(params, settings.t_end, settings.sample_dt,
                        seed, settings.event_cap)
    return Observation(series=traj)


def trim_burn_in(traj: Trajectory, burn_in_frac: float) -> Trajectory:
    """Drop the leading transient before reward computation."""
    if not 0.0 <= burn_in_frac < 1.0:
        raise ValueError("burn-in fraction must lie in [0, 1)")
    k = int(np.floor(traj.values.size * burn_in_frac))
    if traj.values.size - k < 2:
        return traj
    return Trajectory(t0=traj.t0 + k * traj.dt, dt=traj.dt, values=traj.values[k:])
