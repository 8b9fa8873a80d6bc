"""Human-in-the-loop advisory session, driven end to end over HTTP.

Trains a tiny policy, starts the advisory service on a local port, creates a
design session, and plays the operator: each recommended action is "run in
the lab" (here: the simulator), the observation is posted back, and the next
recommendation arrives immediately.

Run:  python demos/05_advisory_session.py
"""

import json
import threading
import urllib.request
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np

from circuitrl import hostaware
from circuitrl.core import sample_prior, rng_from_key
from circuitrl.ppo import PpoConfig, train
from circuitrl.scenarios import load_scenario
from circuitrl.service import AdvisoryService, make_server

def call(base, path, payload=None):
    req = urllib.request.Request(base + path,
                                 data=json.dumps(payload).encode() if payload else None,
                                 headers={"Content-Type": "application/json"},
                                 method="POST" if payload is not None else "GET")
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())

with TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    config = load_scenario("hostaware")
    print("training a small policy (1 minute)...")
    res = train(config, PpoConfig.from_scenario(config, total_steps=40_000), seed=5)
    (tmp / "ckpts").mkdir()
    res.checkpoint.save(tmp / "ckpts" / "demo.json")

    service = AdvisoryService(checkpoints_dir=tmp / "ckpts",
                              sessions_dir=tmp / "sessions")
    httpd = make_server(service, port=0)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"

    theta = sample_prior(config.prior, rng_from_key(99))
    print("the lab's hidden latents:", {k: round(v, 3) for k, v in theta})

    out = call(base, "/api/v1/sessions",
               {"scenario": "hostaware", "checkpoint_id": "demo"})
    sid = out["session_id"]
    rec = out["recommendation"]
    for t in range(1, config.horizon + 1):
        w = rec["physical"]["w"]
        if t == 2:
            wi = call(base, f"/api/v1/sessions/{sid}/whatif",
                      {"action": {"w": w}, "n_samples": 20})
            q = wi["quantiles"]["gfp_ss"]
            print(f"        what-if at w = {w:.1f}: prior-predictive gfp "
                  f"q10/q50/q90 = {q['q10']:.0f}/{q['q50']:.0f}/{q['q90']:.0f}")
        result = hostaware.simulate_to_steady_state(theta, w, config.host_settings())
        print(f"step {t}: recommended w = {w:7.1f} -> observed gfp = {result.gfp_ss:9.1f}")
        out = call(base, f"/api/v1/sessions/{sid}/observations",
                   {"scalar": [result.gfp_ss]})
        if out["status"] == "complete":
            print("session complete")
            break
        rec = out["recommendation"]
    httpd.shutdown()
