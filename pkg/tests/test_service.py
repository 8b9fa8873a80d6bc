import json
import threading

import numpy as np
import pytest
import requests

from circuitrl.core import rng_from_key
from circuitrl.env import DesignEnv, run_episode
from circuitrl.nets import PolicyCheckpoint, PolicyValueNet
from circuitrl.scenarios import load_scenario
from circuitrl.service import (AdvisoryService, ApiError, make_server,
                               parse_csv_trajectory)


@pytest.fixture(scope="module")
def checkpoints(tmp_path_factory):
    d = tmp_path_factory.mktemp("ckpts")
    for scenario in ("hostaware", "repressilator-noepi"):
        config = load_scenario(scenario)
        net = PolicyValueNet(config.net_spec(), seed=3)
        PolicyCheckpoint(scenario_id=scenario, net=net,
                         train_meta={"seed": 3}).save(d / f"{scenario}-demo.json")
    return d


def make_service(checkpoints, tmp_path, ui=None):
    return AdvisoryService(checkpoints_dir=checkpoints,
                           sessions_dir=tmp_path / "sessions", ui_dir=ui)


class TestSessions:
    def test_create_session_returns_first_recommendation(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        assert s.status == "active"
        assert len(s.recommendations) == 1
        rec = s.recommendations[0]
        assert rec["step"] == 1
        assert "w" in rec["physical"]
        assert s.horizon == 5

    def test_identical_first_recommendations_in_deterministic_mode(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        a = svc.create_session("hostaware", "hostaware-demo")
        b = svc.create_session("hostaware", "hostaware-demo")
        assert a.recommendations[0]["normalized"] == b.recommendations[0]["normalized"]

    def test_session_persisted_immediately(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        assert (tmp_path / "sessions" / "events" / f"{s.session_id}.jsonl").exists()
        index = json.loads((tmp_path / "sessions" / "index.json").read_text())
        assert s.session_id in index

    def test_checkpoint_scenario_mismatch_conflict(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        with pytest.raises(ApiError) as err:
            svc.create_session("hostaware", "repressilator-noepi-demo")
        assert err.value.status == 409

    def test_observation_flow_to_completion(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        for t in range(1, 6):
            out = svc.submit_observation(s.session_id, {"scalar": [100.0 * t]})
            if t < 5:
                assert out["status"] == "active"
                assert out["recommendation"]["step"] == t + 1
            else:
                assert out["status"] == "complete"
        with pytest.raises(ApiError) as err:
            svc.submit_observation(s.session_id, {"scalar": [1.0]})
        assert err.value.status == 409

    def test_wrong_observation_shape_rejected_with_schema(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        with pytest.raises(ApiError) as err:
            svc.submit_observation(s.session_id, {"scalar": [1.0, 2.0]})
        assert err.value.status == 400
        assert "expected" in err.value.payload

    def test_out_of_order_submission_conflict(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        svc.submit_observation(s.session_id, {"scalar": [10.0], "step": 1})
        with pytest.raises(ApiError) as err:
            svc.submit_observation(s.session_id, {"scalar": [10.0], "step": 1})
        assert err.value.status == 409

    def test_restart_resumes_identical_recommendations(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        svc.submit_observation(s.session_id, {"scalar": [123.0]})
        out2 = svc.submit_observation(s.session_id, {"scalar": [456.0]})
        # restart: a new service instance over the same directory
        svc2 = make_service(checkpoints, tmp_path)
        s2 = svc2.get_session(s.session_id)
        assert s2.recommendations == svc.get_session(s.session_id).recommendations
        out3a = svc.whatif  # original continues below
        a = svc.submit_observation(s.session_id, {"scalar": [789.0]})
        b = svc2.submit_observation(s.session_id, {"scalar": [789.0]})
        assert a["recommendation"]["normalized"] == b["recommendation"]["normalized"]

    def test_replay_matches_offline_episode(self, checkpoints, tmp_path):
        # Offline rollout with the same checkpoint: driving the service with
        # the recorded observations must reproduce the actions exactly.
        config = load_scenario("hostaware")
        ckpt = PolicyCheckpoint.load(checkpoints / "hostaware-demo.json")

        def policy(enc):
            mean, std, _ = ckpt.net.forward(np.atleast_2d(enc))
            return mean[0], std

        env = DesignEnv(config, master_seed=42)
        record = run_episode(env, policy, deterministic=True)

        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        recs = [s.recommendations[0]]
        for step in record.steps[:-1]:
            out = svc.submit_observation(
                s.session_id, {"scalar": step.observation.scalar.tolist()})
            recs.append(out["recommendation"])
        for rec, step in zip(recs, record.steps):
            assert np.allclose(rec["normalized"], np.clip(step.action_norm, -1, 1),
                               atol=0.0)

    def test_concurrent_submissions_one_wins(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        session = svc.get_session(s.session_id)
        session.lock.acquire()
        try:
            with pytest.raises(ApiError) as err:
                svc.submit_observation(s.session_id, {"scalar": [5.0]})
            assert err.value.status == 409
        finally:
            session.lock.release()
        out = svc.submit_observation(s.session_id, {"scalar": [5.0]})
        assert out["status"] == "active"


class TestWhatIf:
    def test_quantiles_monotone(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        out = svc.whatif(s.session_id, {"action": {"w": 150.0}, "n_samples": 12})
        q = out["quantiles"]["gfp_ss"]
        assert q["q10"] <= q["q50"] <= q["q90"]
        assert out["n_effective"] == 12
        assert out["label"].startswith("prior-predictive")

    def test_zero_induction_all_samples_zero(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("hostaware", "hostaware-demo")
        out = svc.whatif(s.session_id, {"action": {"w": 0.0}, "n_samples": 5})
        assert all(v == 0.0 for v in out["samples"]["gfp_ss"])

    def test_repressilator_whatif_reports_frequencies(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        s = svc.create_session("repressilator-noepi", "repressilator-noepi-demo")
        out = svc.whatif(s.session_id,
                         {"action": {"k_X": 300.0, "k_m": 60.0, "K": 200.0},
                          "n_samples": 4})
        assert len(out["samples"]["frequency"]) == 4
        assert "band_trajectories" in out or out["quantiles"]["frequency"] is None


class TestCsvParsing:
    def test_valid_csv(self):
        payload = parse_csv_trajectory("t,value\n0,1\n0.5,2\n1.0,3\n")
        assert payload["trajectory"]["dt"] == 0.5
        assert payload["trajectory"]["values"] == [1.0, 2.0, 3.0]

    def test_header_required(self):
        with pytest.raises(ApiError):
            parse_csv_trajectory("a,b\n0,1\n1,2\n")

    def test_uniform_grid_required(self):
        with pytest.raises(ApiError):
            parse_csv_trajectory("t,value\n0,1\n0.5,2\n2.0,3\n")


class TestHttpApi:
    @pytest.fixture()
    def server(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        httpd = make_server(svc, port=0)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{httpd.server_address[1]}"
        yield base
        httpd.shutdown()

    def test_full_session_over_http(self, server):
        r = requests.get(f"{server}/api/v1/scenarios", timeout=10)
        assert r.status_code == 200
        assert any(s["scenario"] == "hostaware" for s in r.json()["scenarios"])

        r = requests.get(f"{server}/api/v1/checkpoints", timeout=10)
        ckpt_ids = [c["checkpoint_id"] for c in r.json()["checkpoints"]]
        assert "hostaware-demo" in ckpt_ids

        r = requests.post(f"{server}/api/v1/sessions",
                          json={"scenario": "hostaware",
                                "checkpoint_id": "hostaware-demo"}, timeout=10)
        assert r.status_code == 201
        sid = r.json()["session_id"]
        assert r.json()["recommendation"]["step"] == 1

        for t in range(1, 6):
            r = requests.post(f"{server}/api/v1/sessions/{sid}/observations",
                              json={"scalar": [50.0 * t]}, timeout=30)
            assert r.status_code == 200
        assert r.json()["status"] == "complete"

        r = requests.get(f"{server}/api/v1/sessions/{sid}", timeout=10)
        assert r.json()["status"] == "complete"
        assert len(r.json()["observations"]) == 5

    def test_csv_observation_over_http(self, checkpoints, tmp_path):
        svc = make_service(checkpoints, tmp_path)
        httpd = make_server(svc, port=0)
        thread = threading.Thread(target=httpd.serve_forever, daemon=True)
        thread.start()
        base = f"http://127.0.0.1:{httpd.server_address[1]}"
        try:
            r = requests.post(f"{base}/api/v1/sessions",
                              json={"scenario": "repressilator-noepi",
                                    "checkpoint_id": "repressilator-noepi-demo"},
                              timeout=10)
            sid = r.json()["session_id"]
            values = np.abs(np.sin(np.arange(201) * 0.2) * 50 + 50)
            csv_body = "t,value\n" + "\n".join(
                f"{0.5 * i},{v}" for i, v in enumerate(values))
            r = requests.post(f"{base}/api/v1/sessions/{sid}/observations",
                              data=csv_body.encode(),
                              headers={"Content-Type": "text/csv"}, timeout=30)
            assert r.status_code == 200, r.text
            assert r.json()["status"] == "complete"  # horizon 1
            assert "estimated_frequency" in r.json()
        finally:
            httpd.shutdown()

    def test_error_shapes(self, server):
        r = requests.post(f"{server}/api/v1/sessions",
                          json={"scenario": "hostaware",
                                "checkpoint_id": "missing"}, timeout=10)
        assert r.status_code == 404
        r = requests.get(f"{server}/api/v1/sessions/nope", timeout=10)
        assert r.status_code == 404
        r = requests.post(f"{server}/api/v1/nothing", json={}, timeout=10)
        assert r.status_code == 404
