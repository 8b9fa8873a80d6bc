"""Minimal differentiable network stack for the policy/value networks.

Dense layers, 1-D convolution with pooling for trajectory observations, a
diagonal-Gaussian policy head with state-independent log-std, and a scalar
value head. Gradients are exact reverse-mode, implemented per layer and
verified against central finite differences in the test suite. No GPU, no
general autodiff: just the layer set the policies need.

All trainable parameters live in one flat float64 vector with a layout table,
so checkpoints round-trip bit-exactly through JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# Parameter storage
# ---------------------------------------------------------------------------


class ParamSet:
    """Flat parameter vector with named views and a matching gradient vector."""

    def __init__(self):
        self._entries: list[tuple[str, tuple[int, ...]]] = []
        self.flat: np.ndarray | None = None
        self.grad: np.ndarray | None = None
        self._offsets: list[int] = []

    def allocate(self, name: str, shape: tuple[int, ...]) -> int:
        if self.flat is not None:
            raise RuntimeError("parameter set already built")
        self._entries.append((name, tuple(shape)))
        return len(self._entries) - 1

    def build(self) -> None:
        total = 0
        self._offsets = []
        for _, shape in self._entries:
            self._offsets.append(total)
            total += int(np.prod(shape))
        self.flat = np.zeros(total)
        self.grad = np.zeros(total)

    def view(self, idx: int) -> tuple[np.ndarray, np.ndarray]:
        name, shape = self._entries[idx]
        off = self._offsets[idx]
        size = int(np.prod(shape))
        return (self.flat[off:off + size].reshape(shape),
                self.grad[off:off + size].reshape(shape))

    def layout(self) -> dict:
        return {name: {"offset": off, "shape": list(shape)}
                for (name, shape), off in zip(self._entries, self._offsets)}

    def zero_grad(self) -> None:
        self.grad[:] = 0.0


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.normal(size=(max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[:shape[0], :shape[1]]


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


class Dense:
    def __init__(self, ps: ParamSet, name: str, d_in: int, d_out: int, gain: float):
        self.d_in, self.d_out, self.gain = d_in, d_out, gain
        self.iw = ps.allocate(f"{name}.W", (d_in, d_out))
        self.ib = ps.allocate(f"{name}.b", (d_out,))

    def bind(self, ps: ParamSet) -> None:
        self.W, self.gW = ps.view(self.iw)
        self.b, self.gb = ps.view(self.ib)

    def init(self, rng: np.random.Generator) -> None:
        self.W[:] = orthogonal(rng, (self.d_in, self.d_out), self.gain)
        self.b[:] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W + self.b

    def backward(self, g: np.ndarray) -> np.ndarray:
        self.gW += self._x.T @ g
        self.gb += g.sum(axis=0)
        return g @ self.W.T


class Tanh:
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._y = np.tanh(x)
        return self._y

    def backward(self, g: np.ndarray) -> np.ndarray:
        return g * (1.0 - self._y ** 2)


class Conv1d:
    """1-D convolution over (batch, channels, length) with stride and padding.

    Padding keeps ceil(L / stride) output samples; circular padding makes the
    layer exactly shift-equivariant, which combined with global average
    pooling yields shift-invariant features.
    """

    def __init__(self, ps: ParamSet, name: str, c_in: int, c_out: int,
                 kernel: int, stride: int, padding: str, gain: float):
        if padding not in ("zero", "circular"):
            raise ValueError("padding must be 'zero' or 'circular'")
        self.c_in, self.c_out, self.k, self.stride = c_in, c_out, kernel, stride
        self.padding = padding
        self.gain = gain
        self.iw = ps.allocate(f"{name}.W", (c_in * kernel, c_out))
        self.ib = ps.allocate(f"{name}.b", (c_out,))

    def bind(self, ps: ParamSet) -> None:
        self.W, self.gW = ps.view(self.iw)
        self.b, self.gb = ps.view(self.ib)

    def init(self, rng: np.random.Generator) -> None:
        self.W[:] = orthogonal(rng, (self.c_in * self.k, self.c_out), self.gain)
        self.b[:] = 0.0

    def _pad(self, x: np.ndarray) -> np.ndarray:
        pl = (self.k - 1) // 2
        pr = self.k - 1 - pl
        if self.padding == "zero":
            return np.pad(x, ((0, 0), (0, 0), (pl, pr)))
        return np.concatenate([x[:, :, -pl:] if pl else x[:, :, :0],
                               x,
                               x[:, :, :pr] if pr else x[:, :, :0]], axis=2)

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, l = x.shape
        xp = self._pad(x)
        win = np.lib.stride_tricks.sliding_window_view(xp, self.k, axis=2)
        win = win[:, :, ::self.stride, :]                    # (B, Cin, Lout, K)
        lout = win.shape[2]
        col = win.transpose(0, 2, 1, 3).reshape(b, lout, c * self.k)
        self._col = col
        self._in_shape = (b, c, l)
        y = col @ self.W + self.b                            # (B, Lout, Cout)
        return y.transpose(0, 2, 1)

    def backward(self, g: np.ndarray) -> np.ndarray:
        b, c, l = self._in_shape
        gy = g.transpose(0, 2, 1)                            # (B, Lout, Cout)
        lout = gy.shape[1]
        self.gW += self._col.reshape(-1, c * self.k).T @ gy.reshape(-1, self.c_out)
        self.gb += gy.sum(axis=(0, 1))
        gcol = gy @ self.W.T                                 # (B, Lout, Cin*K)
        gcol = gcol.reshape(b, lout, c, self.k).transpose(0, 2, 1, 3)
        pl = (self.k - 1) // 2
        pr = self.k - 1 - pl
        gxp = np.zeros((b, c, l + self.k - 1))
        for t in range(self.k):
            gxp[:, :, t:t + self.stride * lout:self.stride] += gcol[:, :, :, t][:, :, :lout]
        if self.padding == "zero":
            return gxp[:, :, pl:pl + l]
        gx = gxp[:, :, pl:pl + l].copy()
        if pl:
            gx[:, :, -pl:] += gxp[:, :, :pl]
        if pr:
            gx[:, :, :pr] += gxp[:, :, pl + l:]
        return gx


class GlobalAvgPool1d:
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._l = x.shape[2]
        return x.mean(axis=2)

    def backward(self, g: np.ndarray) -> np.ndarray:
        return np.repeat(g[:, :, None], self._l, axis=2) / self._l


class Flatten:
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g: np.ndarray) -> np.ndarray:
        return g.reshape(self._shape)


# ---------------------------------------------------------------------------
# Generic sequential network (used by the regressor and in tests)
# ---------------------------------------------------------------------------


def dense_spec(in_dim: int, hidden: Sequence[int], out_dim: int) -> dict:
    return {"kind": "dense", "in_dim": int(in_dim),
            "hidden": [int(h) for h in hidden], "out_dim": int(out_dim)}


class Network:
    """Plain dense tanh network built from a spec dict."""

    def __init__(self, spec: Mapping, seed: int | None = None,
                 params_flat: np.ndarray | None = None):
        if spec["kind"] != "dense":
            raise ValueError("Network only builds dense specs")
        self.spec = dict(spec)
        self.params = ParamSet()
        self.layers = []
        d = spec["in_dim"]
        for i, h in enumerate(spec["hidden"]):
            self.layers.append(Dense(self.params, f"dense{i}", d, h, gain=np.sqrt(2.0)))
            self.layers.append(Tanh())
            d = h
        self.layers.append(Dense(self.params, "head", d, spec["out_dim"], gain=1.0))
        self.params.build()
        for layer in self.layers:
            if hasattr(layer, "bind"):
                layer.bind(self.params)
        if params_flat is not None:
            self.params.flat[:] = params_flat
        else:
            rng = np.random.default_rng(0 if seed is None else seed)
            for layer in self.layers:
                if hasattr(layer, "init"):
                    layer.init(rng)

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=float)
        for layer in self.layers:
            h = layer.forward(h)
        return h

    def backward(self, g: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def to_json(self) -> dict:
        return {"spec": self.spec, "params": self.params.flat.tolist(),
                "layout": self.params.layout()}

    @staticmethod
    def from_json(obj: Mapping) -> "Network":
        return Network(obj["spec"], params_flat=np.asarray(obj["params"], dtype=float))


# ---------------------------------------------------------------------------
# Policy/value network over encoded histories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetSpec:
    """Architecture of the shared-encoder policy/value network."""

    horizon: int
    obs_dim: int
    action_dim: int
    encoder: str = "identity"              # "identity" | "conv"
    obs_transform: str = "none"            # "none" | "log1p"
    obs_scale: float = 1.0
    channels: tuple[int, int] = (16, 32)
    kernel: int = 9
    strides: tuple[int, int] = (2, 2)
    padding: str = "zero"
    trunk: tuple[int, ...] = (128, 64)

    def to_json(self) -> dict:
        return {
            "horizon": self.horizon, "obs_dim": self.obs_dim,
            "action_dim": self.action_dim, "encoder": self.encoder,
            "obs_transform": self.obs_transform, "obs_scale": self.obs_scale,
            "channels": list(self.channels), "kernel": self.kernel,
            "strides": list(self.strides), "padding": self.padding,
            "trunk": list(self.trunk),
        }

    @staticmethod
    def from_json(obj: Mapping) -> "NetSpec":
        return NetSpec(
            horizon=int(obj["horizon"]), obs_dim=int(obj["obs_dim"]),
            action_dim=int(obj["action_dim"]), encoder=obj.get("encoder", "identity"),
            obs_transform=obj.get("obs_transform", "none"),
            obs_scale=float(obj.get("obs_scale", 1.0)),
            channels=tuple(obj.get("channels", (16, 32))),
            kernel=int(obj.get("kernel", 9)),
            strides=tuple(obj.get("strides", (2, 2))),
            padding=obj.get("padding", "zero"),
            trunk=tuple(obj.get("trunk", (128, 64))),
        )

    @property
    def input_dim(self) -> int:
        return self.horizon * (self.obs_dim + self.action_dim)


class PolicyValueNet:
    """Shared observation encoder + dense trunk with policy mean, value, and
    state-independent log-std heads.

    History slices [o_i, a_i] are split apart; each observation is transformed
    (fixed preprocessing), passed through the encoder, and the per-slice
    features are concatenated with their actions before the trunk.
    """

    def __init__(self, spec: NetSpec, seed: int | None = None,
                 params_flat: np.ndarray | None = None):
        self.spec = spec
        ps = ParamSet()
        self.conv_layers = []
        if spec.encoder == "conv":
            c_in = 1
            for i, (c_out, stride) in enumerate(zip(spec.channels, spec.strides)):
                self.conv_layers.append(Conv1d(ps, f"conv{i}", c_in, c_out,
                                               spec.kernel, stride, spec.padding,
                                               gain=np.sqrt(2.0)))
                self.conv_layers.append(Tanh())
                c_in = c_out
            self.pool = GlobalAvgPool1d()
            feat_dim = spec.channels[-1]
        elif spec.encoder == "identity":
            self.pool = None
            feat_dim = spec.obs_dim
        else:
            raise ValueError(f"unknown encoder {spec.encoder!r}")
        self.feat_dim = feat_dim

        z_dim = spec.horizon * (feat_dim + spec.action_dim)
        self.trunk_layers = []
        d = z_dim
        for i, h in enumerate(spec.trunk):
            self.trunk_layers.append(Dense(ps, f"trunk{i}", d, h, gain=np.sqrt(2.0)))
            self.trunk_layers.append(Tanh())
            d = h
        self.head_mean = Dense(ps, "policy_mean", d, spec.action_dim, gain=0.01)
        self.head_value = Dense(ps, "value", d, 1, gain=1.0)
        self.i_logstd = ps.allocate("log_std", (spec.action_dim,))
        ps.build()
        for layer in (*self.conv_layers, *self.trunk_layers, self.head_mean, self.head_value):
            if hasattr(layer, "bind"):
                layer.bind(ps)
        self.log_std, self.g_logstd = ps.view(self.i_logstd)
        self.params = ps

        if params_flat is not None:
            ps.flat[:] = params_flat
        else:
            rng = np.random.default_rng(0 if seed is None else seed)
            for layer in (*self.conv_layers, *self.trunk_layers, self.head_mean, self.head_value):
                if hasattr(layer, "init"):
                    layer.init(rng)
            self.log_std[:] = 0.0

    # -- forward / backward -------------------------------------------------

    def _split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = self.spec
        b = x.shape[0]
        slots = x.reshape(b, s.horizon, s.obs_dim + s.action_dim)
        return slots[:, :, :s.obs_dim], slots[:, :, s.obs_dim:]

    def _transform_obs(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        if self.spec.obs_transform == "log1p":
            t = np.log1p(np.maximum(obs, 0.0))
            dt = np.where(obs > 0.0, 1.0 / (1.0 + np.maximum(obs, 0.0)), 0.0)
        elif self.spec.obs_transform == "none":
            t = obs
            dt = None
        else:
            raise ValueError(f"unknown obs transform {self.spec.obs_transform!r}")
        return t * self.spec.obs_scale, dt

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (mean (B,A), std (A,), value (B,))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.spec.input_dim:
            raise ValueError(f"input dim {x.shape[1]} != spec {self.spec.input_dim}")
        b = x.shape[0]
        s = self.spec
        obs, act = self._split(x)
        tobs, _ = self._transform_obs(obs)
        if s.encoder == "conv":
            h = tobs.reshape(b * s.horizon, 1, s.obs_dim)
            for layer in self.conv_layers:
                h = layer.forward(h)
            h = self.pool.forward(h)
            feats = h.reshape(b, s.horizon * self.feat_dim)
        else:
            feats = tobs.reshape(b, s.horizon * self.feat_dim)
        z = np.concatenate([feats, act.reshape(b, s.horizon * s.action_dim)], axis=1)
        h = z
        for layer in self.trunk_layers:
            h = layer.forward(h)
        mean = self.head_mean.forward(h)
        value = self.head_value.forward(h)[:, 0]
        std = np.exp(self.log_std)
        return mean, std, value

    def backward(self, d_mean: np.ndarray, d_value: np.ndarray,
                 d_logstd: np.ndarray | None = None) -> None:
        """Accumulate parameter gradients for the last forward batch."""
        g = self.head_mean.backward(np.atleast_2d(d_mean))
        g = g + self.head_value.backward(np.asarray(d_value, dtype=float).reshape(-1, 1))
        for layer in reversed(self.trunk_layers):
            g = layer.backward(g)
        if self.spec.encoder == "conv":
            b = g.shape[0]
            s = self.spec
            gfeats = g[:, :s.horizon * self.feat_dim]
            gh = gfeats.reshape(b * s.horizon, self.feat_dim)
            gh = self.pool.backward(gh)
            for layer in reversed(self.conv_layers):
                gh = layer.backward(gh)
            # gradient w.r.t. the (transformed) observations is discarded:
            # inputs are data, not parameters.
        if d_logstd is not None:
            self.g_logstd += d_logstd

    def zero_grad(self) -> None:
        self.params.zero_grad()

    # -- serialization --------------------------------------------------------

    def to_json(self) -> dict:
        return {"spec": self.spec.to_json(), "params": self.params.flat.tolist(),
                "layout": self.params.layout()}

    @staticmethod
    def from_json(obj: Mapping) -> "PolicyValueNet":
        return PolicyValueNet(NetSpec.from_json(obj["spec"]),
                              params_flat=np.asarray(obj["params"], dtype=float))


# ---------------------------------------------------------------------------
# Diagonal Gaussian policy head
# ---------------------------------------------------------------------------


def gaussian_log_prob(a: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    a = np.atleast_2d(a)
    mean = np.atleast_2d(mean)
    z = (a - mean) / std
    return -0.5 * (z ** 2).sum(axis=1) - np.log(std).sum() - 0.5 * LOG_2PI * a.shape[1]


def gaussian_entropy(std: np.ndarray) -> float:
    return float(np.log(std).sum() + 0.5 * std.size * (1.0 + LOG_2PI))


def gaussian_sample(mean: np.ndarray, std: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    return mean + std * rng.standard_normal(mean.shape)


# ---------------------------------------------------------------------------
# Adam optimizer on a flat parameter vector
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, n: int, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m += (1.0 - self.beta1) * (grad - self.m)
        self.v += (1.0 - self.beta2) * (grad ** 2 - self.v)
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# ---------------------------------------------------------------------------
# Policy checkpoints
# ---------------------------------------------------------------------------


CHECKPOINT_VERSION = 1


@dataclass
class PolicyCheckpoint:
    scenario_id: str
    net: PolicyValueNet
    train_meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        body = self.net.to_json()
        return {
            "version": CHECKPOINT_VERSION,
            "scenario_id": self.scenario_id,
            "net_spec": body["spec"],
            "params": body["params"],
            "layout": body["layout"],
            "train_meta": self.train_meta,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def from_json(obj: Mapping, expect_scenario: str | None = None) -> "PolicyCheckpoint":
        if obj.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {obj.get('version')!r}")
        scenario = obj["scenario_id"]
        if expect_scenario is not None and scenario != expect_scenario:
            raise ValueError(
                f"checkpoint was trained for scenario {scenario!r}, not {expect_scenario!r}")
        net = PolicyValueNet(NetSpec.from_json(obj["net_spec"]),
                             params_flat=np.asarray(obj["params"], dtype=float))
        return PolicyCheckpoint(scenario_id=scenario, net=net,
                                train_meta=dict(obj.get("train_meta", {})))

    @staticmethod
    def load(path, expect_scenario: str | None = None) -> "PolicyCheckpoint":
        with open(path) as fh:
            obj = json.load(fh)
        return PolicyCheckpoint.from_json(obj, expect_scenario)
