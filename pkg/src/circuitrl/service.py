"""Deployment-phase advisory service.

An operator opens a design session against a frozen policy checkpoint, enters
each wet-lab observation as it arrives, and immediately receives the next
recommended action; a what-if endpoint simulates candidate actions over prior
draws for decision support. The service never infers parameters and never
updates the policy: it replays the checkpoint on the session history.

Sessions persist as append-only JSON-lines event logs plus an index file, so
a process restart reconstructs every session exactly.
"""

from __future__ import annotations

import io
import json
import threading
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np

from .core import (History, LatentParams, Observation, Trajectory,
                   integer_seed, rng_from_key, sample_prior, scale_action)
from .env import ScenarioArtifacts, make_simulator
from .nets import PolicyCheckpoint, gaussian_sample
from .rewards import load_normalizer, load_regressor, normalized_autocorrelation
from .scenarios import SCENARIO_IDS, ScenarioConfig, load_scenario


class ApiError(Exception):
    def __init__(self, status: int, message: str, **extra):
        super().__init__(message)
        self.status = status
        self.payload = {"error": message, **extra}


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------


@dataclass
class DesignSession:
    session_id: str
    scenario_id: str
    checkpoint_id: str
    mode: str                      # "deterministic" | "stochastic"
    horizon: int
    history: History
    status: str = "active"         # active | complete | aborted
    recommendations: list[dict] = field(default_factory=list)
    observations: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def t(self) -> int:
        return len(self.observations) + 1

    def view(self) -> dict:
        return {
            "session_id": self.session_id,
            "scenario": self.scenario_id,
            "checkpoint_id": self.checkpoint_id,
            "mode": self.mode,
            "horizon": self.horizon,
            "step": min(self.t, self.horizon),
            "status": self.status,
            "recommendations": self.recommendations,
            "observations": self.observations,
        }


def _expected_observation_schema(config: ScenarioConfig) -> dict:
    if config.obs_kind == "scalar":
        names = (["gfp_ss", "growth_rel"] if config.obs_dim == 2 else ["gfp_ss"])
        return {"scalar": f"array of {config.obs_dim} nonnegative numbers {names}"}
    return {"trajectory": {"t0": "number", "dt": "number > 0",
                           "values": f"array of {config.obs_dim} counts"},
            "alternative": "text/csv body with header t,value"}


class AdvisoryService:
    def __init__(self, checkpoints_dir: str | Path, sessions_dir: str | Path,
                 artifacts_dir: str | Path | None = None,
                 ui_dir: str | Path | None = None):
        self.checkpoints_dir = Path(checkpoints_dir)
        self.sessions_dir = Path(sessions_dir)
        self.artifacts_dir = Path(artifacts_dir) if artifacts_dir else None
        self.ui_dir = Path(ui_dir) if ui_dir else None
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        (self.sessions_dir / "events").mkdir(exist_ok=True)
        self._sessions: dict[str, DesignSession] = {}
        self._checkpoints: dict[str, PolicyCheckpoint] = {}
        self._configs: dict[str, ScenarioConfig] = {}
        self._global_lock = threading.Lock()
        self._restore_sessions()

    # -- registry ------------------------------------------------------------

    def list_scenarios(self) -> list[dict]:
        out = []
        for sid in SCENARIO_IDS:
            cfg = self._config(sid)
            out.append({
                "scenario": sid,
                "horizon": cfg.horizon,
                "action_bounds": cfg.bounds.to_json(),
                "observation": {"kind": cfg.obs_kind, "dim": cfg.obs_dim},
                "observation_schema": _expected_observation_schema(cfg),
            })
        return out

    def list_checkpoints(self) -> list[dict]:
        out = []
        if self.checkpoints_dir.exists():
            for path in sorted(self.checkpoints_dir.glob("*.json")):
                try:
                    with open(path) as fh:
                        obj = json.load(fh)
                    out.append({"checkpoint_id": path.stem,
                                "scenario": obj.get("scenario_id"),
                                "train_meta": obj.get("train_meta", {})})
                except (json.JSONDecodeError, KeyError):
                    continue
        return out

    def _config(self, scenario_id: str) -> ScenarioConfig:
        if scenario_id not in self._configs:
            self._configs[scenario_id] = load_scenario(scenario_id)
        return self._configs[scenario_id]

    def _checkpoint(self, checkpoint_id: str) -> PolicyCheckpoint:
        if checkpoint_id not in self._checkpoints:
            path = self.checkpoints_dir / f"{checkpoint_id}.json"
            if not path.exists():
                raise ApiError(404, f"unknown checkpoint {checkpoint_id!r}")
            self._checkpoints[checkpoint_id] = PolicyCheckpoint.load(path)
        return self._checkpoints[checkpoint_id]

    # -- event log -----------------------------------------------------------

    def _events_path(self, session_id: str) -> Path:
        return self.sessions_dir / "events" / f"{session_id}.jsonl"

    def _append_event(self, session_id: str, event: dict) -> None:
        with open(self._events_path(session_id), "a") as fh:
            fh.write(json.dumps(event) + "\n")

    def _write_index(self) -> None:
        index = {sid: {"scenario": s.scenario_id, "checkpoint_id": s.checkpoint_id,
                       "status": s.status, "step": min(s.t, s.horizon)}
                 for sid, s in self._sessions.items()}
        with open(self.sessions_dir / "index.json", "w") as fh:
            json.dump(index, fh, indent=2)

    def _restore_sessions(self) -> None:
        for path in sorted((self.sessions_dir / "events").glob("*.jsonl")):
            session = self._replay_events(path)
            if session is not None:
                self._sessions[session.session_id] = session

    def _replay_events(self, path: Path) -> DesignSession | None:
        session: DesignSession | None = None
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                ev = json.loads(line)
                kind = ev["type"]
                if kind == "created":
                    cfg = self._config(ev["scenario"])
                    session = DesignSession(
                        session_id=ev["session_id"], scenario_id=ev["scenario"],
                        checkpoint_id=ev["checkpoint_id"], mode=ev["mode"],
                        horizon=ev["horizon"],
                        history=History(cfg.horizon, cfg.bounds.dim, cfg.obs_dim))
                elif kind == "recommendation" and session is not None:
                    session.recommendations.append(ev["recommendation"])
                elif kind == "observation" and session is not None:
                    obs = Observation.from_json(ev["observation"])
                    a = np.asarray(
                        session.recommendations[len(session.observations)]["normalized"],
                        dtype=float)
                    session.history.append(a, obs)
                    session.observations.append(ev["observation"])
                elif kind == "completed" and session is not None:
                    session.status = "complete"
        return session

    # -- core operations -------------------------------------------------------

    def _recommendation(self, session: DesignSession, config: ScenarioConfig) -> dict:
        ckpt = self._checkpoint(session.checkpoint_id)
        enc = session.history.encode()
        mean, std, _ = ckpt.net.forward(enc.reshape(1, -1))
        step = session.t
        if session.mode == "stochastic":
            seed = integer_seed(hash(session.session_id) % 2 ** 31, step)
            rng = np.random.default_rng(seed)
            a = gaussian_sample(mean[0], std, rng)
            rec_seed = int(seed)
        else:
            a = mean[0]
            rec_seed = None
        a = np.clip(a, -1.0, 1.0)
        phys = scale_action(a, config.bounds)
        rec = {
            "step": step,
            "normalized": a.tolist(),
            "physical": {name: float(v) for name, v in zip(config.bounds.names, phys)},
            "mode": session.mode,
        }
        if rec_seed is not None:
            rec["seed"] = rec_seed
        return rec

    def create_session(self, scenario_id: str, checkpoint_id: str,
                       mode: str = "deterministic") -> DesignSession:
        if mode not in ("deterministic", "stochastic"):
            raise ApiError(400, f"unknown mode {mode!r}")
        config = self._config(scenario_id)
        ckpt = self._checkpoint(checkpoint_id)
        if ckpt.scenario_id != scenario_id:
            raise ApiError(409, f"checkpoint {checkpoint_id!r} was trained for "
                                f"{ckpt.scenario_id!r}, not {scenario_id!r}")
        session_id = uuid.uuid4().hex[:12]
        session = DesignSession(
            session_id=session_id, scenario_id=scenario_id,
            checkpoint_id=checkpoint_id, mode=mode, horizon=config.horizon,
            history=History(config.horizon, config.bounds.dim, config.obs_dim))
        self._append_event(session_id, {
            "type": "created", "session_id": session_id, "scenario": scenario_id,
            "checkpoint_id": checkpoint_id, "mode": mode, "horizon": config.horizon})
        rec = self._recommendation(session, config)
        session.recommendations.append(rec)
        self._append_event(session_id, {"type": "recommendation",
                                        "recommendation": rec})
        with self._global_lock:
            self._sessions[session_id] = session
            self._write_index()
        return session

    def get_session(self, session_id: str) -> DesignSession:
        session = self._sessions.get(session_id)
        if session is None:
            raise ApiError(404, f"unknown session {session_id!r}")
        return session

    def _parse_observation(self, config: ScenarioConfig, payload: dict) -> Observation:
        try:
            if config.obs_kind == "scalar":
                if "scalar" not in payload:
                    raise ApiError(400, "scalar observation expected",
                                   expected=_expected_observation_schema(config))
                vals = np.asarray(payload["scalar"], dtype=float)
                if vals.size != config.obs_dim:
                    raise ApiError(400,
                                   f"expected {config.obs_dim} scalar value(s), got {vals.size}",
                                   expected=_expected_observation_schema(config))
                return Observation(scalar=vals)
            if "trajectory" not in payload:
                raise ApiError(400, "trajectory observation expected",
                               expected=_expected_observation_schema(config))
            tr = payload["trajectory"]
            traj = Trajectory(t0=float(tr.get("t0", 0.0)), dt=float(tr["dt"]),
                              values=np.asarray(tr["values"], dtype=float))
            if traj.values.size != config.obs_dim:
                raise ApiError(400,
                               f"expected a {config.obs_dim}-sample trajectory, "
                               f"got {traj.values.size}",
                               expected=_expected_observation_schema(config))
            return Observation(series=traj)
        except ApiError:
            raise
        except Exception as exc:
            raise ApiError(400, f"malformed observation: {exc}",
                           expected=_expected_observation_schema(config)) from exc

    def submit_observation(self, session_id: str, payload: dict) -> dict:
        session = self.get_session(session_id)
        config = self._config(session.scenario_id)
        got_lock = session.lock.acquire(blocking=False)
        if not got_lock:
            raise ApiError(409, "another submission for this session is in flight")
        try:
            if session.status != "active":
                raise ApiError(409, f"session is {session.status}")
            if "step" in payload and int(payload["step"]) != session.t:
                raise ApiError(409,
                               f"out-of-order submission: expected step {session.t}, "
                               f"got {payload['step']}")
            obs = self._parse_observation(config, payload)
            last_rec = session.recommendations[len(session.observations)]
            a = np.asarray(last_rec["normalized"], dtype=float)
            session.history.append(a, obs)
            session.observations.append(obs.to_json())
            self._append_event(session_id, {"type": "observation",
                                            "observation": obs.to_json()})
            extra = {}
            if config.obs_kind == "series":
                from .repressilator import trim_burn_in

                trimmed = trim_burn_in(obs.series,
                                       config.repressilator_settings().burn_in_frac)
                ac = normalized_autocorrelation(trimmed)
                extra["estimated_frequency"] = (1.0 / ac.tau2) if ac.valid else None
                extra["second_peak"] = ac.C_tau2 if ac.valid else None
            if len(session.observations) >= session.horizon:
                session.status = "complete"
                self._append_event(session_id, {"type": "completed"})
                with self._global_lock:
                    self._write_index()
                return {"status": "complete", "session": session.view(), **extra}
            rec = self._recommendation(session, config)
            session.recommendations.append(rec)
            self._append_event(session_id, {"type": "recommendation",
                                            "recommendation": rec})
            with self._global_lock:
                self._write_index()
            return {"status": "active", "recommendation": rec, **extra}
        finally:
            session.lock.release()

    def whatif(self, session_id: str, payload: dict) -> dict:
        session = self.get_session(session_id)
        if session.status != "active":
            raise ApiError(409, f"session is {session.status}")
        config = self._config(session.scenario_id)
        n_samples = int(payload.get("n_samples", 100))
        if not 1 <= n_samples <= 1000:
            raise ApiError(400, "n_samples must lie in [1, 1000]")
        action = payload.get("action")
        if action is None:
            raise ApiError(400, "candidate action required",
                           expected={"action": {n: "physical value"
                                                for n in config.bounds.names}})
        if isinstance(action, dict):
            try:
                phys = np.array([float(action[n]) for n in config.bounds.names])
            except KeyError as exc:
                raise ApiError(400, f"action missing dimension {exc}") from exc
            a_norm = 2 * (phys - config.bounds.lo) / (config.bounds.hi - config.bounds.lo) - 1
        else:
            a_norm = np.asarray(action, dtype=float)
            if a_norm.size != config.bounds.dim:
                raise ApiError(400, f"action needs {config.bounds.dim} dimensions")
        a_norm = np.clip(a_norm, -1, 1)

        simulator = make_simulator(config)
        base_seed = integer_seed(abs(hash(session_id)) % 2 ** 31, 0x3F,
                                 len(session.observations))
        rng = np.random.default_rng(base_seed)
        samples = []
        failures = 0
        for k in range(n_samples):
            theta = (sample_prior(config.prior, rng) if len(config.prior)
                     else LatentParams((), np.array([])))
            try:
                obs = simulator.observe(theta, a_norm, integer_seed(base_seed % 2 ** 31, k))
            except Exception:
                failures += 1
                continue
            samples.append(obs)

        response: dict = {
            "label": "prior-predictive (no posterior inference)",
            "action_normalized": a_norm.tolist(),
            "action_physical": {n: float(v) for n, v in
                                zip(config.bounds.names,
                                    scale_action(a_norm, config.bounds))},
            "n_requested": n_samples,
            "n_effective": len(samples),
            "n_failed": failures,
        }
        if not samples:
            raise ApiError(500, "all what-if simulations failed")
        if config.obs_kind == "scalar":
            arr = np.stack([o.scalar for o in samples])
            names = ["gfp_ss", "growth_rel"][:config.obs_dim]
            response["quantiles"] = {
                name: {"q10": float(np.percentile(arr[:, i], 10)),
                       "q50": float(np.percentile(arr[:, i], 50)),
                       "q90": float(np.percentile(arr[:, i], 90))}
                for i, name in enumerate(names)}
            response["samples"] = {name: arr[:, i].tolist()
                                   for i, name in enumerate(names)}
        else:
            burn = config.repressilator_settings().burn_in_frac
            from .repressilator import trim_burn_in

            freqs = []
            for o in samples:
                ac = normalized_autocorrelation(trim_burn_in(o.series, burn))
                freqs.append(1.0 / ac.tau2 if ac.valid else np.nan)
            freqs = np.array(freqs)
            defined = freqs[np.isfinite(freqs)]
            response["samples"] = {"frequency": [None if np.isnan(f) else float(f)
                                                 for f in freqs]}
            if defined.size:
                q = {"q10": float(np.percentile(defined, 10)),
                     "q50": float(np.percentile(defined, 50)),
                     "q90": float(np.percentile(defined, 90))}
                response["quantiles"] = {"frequency": q}
                bands = {}
                for label, target in q.items():
                    idx = int(np.nanargmin(np.abs(freqs - target)))
                    tr = samples[idx].series
                    bands[label] = {"t0": tr.t0, "dt": tr.dt,
                                    "values": tr.values.tolist()}
                response["band_trajectories"] = bands
            else:
                response["quantiles"] = {"frequency": None}
        return response


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------


_CONTENT_TYPES = {
    ".html": "text/html", ".js": "text/javascript", ".css": "text/css",
    ".json": "application/json", ".svg": "image/svg+xml", ".png": "image/png",
    ".map": "application/json", ".ico": "image/x-icon",
}


def parse_csv_trajectory(text: str) -> dict:
    """CSV with header t,value -> trajectory payload (uniform grid enforced)."""
    import csv as _csv

    rows = list(_csv.reader(io.StringIO(text)))
    if not rows or [c.strip().lower() for c in rows[0][:2]] != ["t", "value"]:
        raise ApiError(400, "CSV must carry the header 't,value'")
    ts, vs = [], []
    for row in rows[1:]:
        if len(row) < 2 or not row[0].strip():
            continue
        ts.append(float(row[0]))
        vs.append(float(row[1]))
    if len(ts) < 2:
        raise ApiError(400, "CSV needs at least two samples")
    dts = np.diff(ts)
    if np.max(np.abs(dts - dts[0])) > 1e-6 * max(abs(dts[0]), 1e-12):
        raise ApiError(400, "CSV time grid must be uniform")
    return {"trajectory": {"t0": ts[0], "dt": float(dts[0]), "values": vs}}


def make_handler(service: AdvisoryService):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            pass

        def _send_json(self, status: int, payload) -> None:
            body = json.dumps(payload).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read_body(self) -> bytes:
            length = int(self.headers.get("Content-Length", 0))
            return self.rfile.read(length) if length else b""

        def _api(self, method: str) -> None:
            parts = [p for p in self.path.split("?")[0].split("/") if p]
            # parts[0] == 'api', parts[1] == 'v1'
            try:
                if len(parts) < 3:
                    raise ApiError(404, "not found")
                head = parts[2]
                if method == "GET" and head == "scenarios" and len(parts) == 3:
                    return self._send_json(200, {"scenarios": service.list_scenarios()})
                if method == "GET" and head == "checkpoints" and len(parts) == 3:
                    return self._send_json(200, {"checkpoints": service.list_checkpoints()})
                if head == "sessions":
                    if method == "POST" and len(parts) == 3:
                        body = json.loads(self._read_body() or b"{}")
                        session = service.create_session(
                            body.get("scenario", ""), body.get("checkpoint_id", ""),
                            body.get("mode", "deterministic"))
                        return self._send_json(201, {
                            "session_id": session.session_id,
                            "recommendation": session.recommendations[-1],
                            "session": session.view()})
                    if method == "GET" and len(parts) == 3:
                        return self._send_json(200, {
                            "sessions": [s.view() for s in
                                         service._sessions.values()]})
                    if len(parts) >= 4:
                        sid = parts[3]
                        if method == "GET" and len(parts) == 4:
                            return self._send_json(200, service.get_session(sid).view())
                        if method == "POST" and len(parts) == 5 and parts[4] == "observations":
                            ctype = (self.headers.get("Content-Type") or "").split(";")[0]
                            raw = self._read_body()
                            payload = (parse_csv_trajectory(raw.decode())
                                       if ctype == "text/csv"
                                       else json.loads(raw or b"{}"))
                            return self._send_json(200,
                                                   service.submit_observation(sid, payload))
                        if method == "POST" and len(parts) == 5 and parts[4] == "whatif":
                            payload = json.loads(self._read_body() or b"{}")
                            return self._send_json(200, service.whatif(sid, payload))
                raise ApiError(404, "not found")
            except ApiError as exc:
                self._send_json(exc.status, exc.payload)
            except json.JSONDecodeError:
                self._send_json(400, {"error": "request body is not valid JSON"})
            except Exception as exc:
                self._send_json(500, {"error": f"internal error: {exc}"})

        def _static(self) -> None:
            if service.ui_dir is None:
                return self._send_json(404, {"error": "no UI bundle configured"})
            rel = self.path.split("?")[0].lstrip("/") or "index.html"
            path = (service.ui_dir / rel).resolve()
            if not str(path).startswith(str(service.ui_dir.resolve())) or not path.is_file():
                path = (service.ui_dir / "index.html").resolve()
                if not path.is_file():
                    return self._send_json(404, {"error": "not found"})
            body = path.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type",
                             _CONTENT_TYPES.get(path.suffix, "application/octet-stream"))
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path.startswith("/api/"):
                self._api("GET")
            else:
                self._static()

        def do_POST(self):
            if self.path.startswith("/api/"):
                self._api("POST")
            else:
                self._send_json(404, {"error": "not found"})

    return Handler


def make_server(service: AdvisoryService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), make_handler(service))


def serve_forever(service: AdvisoryService, host: str = "127.0.0.1",
                  port: int = 8000) -> None:
    make_server(service, host, port).serve_forever()
