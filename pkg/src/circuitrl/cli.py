"""Command-line entry point: train / eval / simulate / baseline-bo /
artifacts / serve.

Every run writes a manifest (resolved configuration, seed, code version,
timestamps, artifact paths) into its output directory before doing any work,
so runs are replayable from the manifest alone. Config precedence is
flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import LatentParams, rng_from_key
from .scenarios import SCENARIO_IDS, load_scenario


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(out_dir: Path, subcommand: str, resolved: dict,
                   seed: int | None, artifact_paths: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "run_id": out_dir.name,
        "subcommand": subcommand,
        "version": __version__,
        "master_seed": seed,
        "created_at": _utc_now(),
        "resolved_config": resolved,
        "artifacts": artifact_paths,
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def _load_artifacts(config, artifacts_dir: str | None):
    from .env import ScenarioArtifacts
    from .rewards import load_normalizer, load_regressor

    arts = ScenarioArtifacts()
    paths = {}
    if artifacts_dir is None:
        return arts, paths
    base = Path(artifacts_dir) / config.scenario
    reg_path = base / "regressor.json"
    norm_path = base / "normalizer.json"
    if config.needs_regressor and reg_path.exists():
        arts.regressor = load_regressor(reg_path)
        paths["regressor"] = str(reg_path)
    if config.needs_normalizer and norm_path.exists():
        arts.normalizer = load_normalizer(norm_path)
        paths["normalizer"] = str(norm_path)
    return arts, paths


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    from .ppo import PpoConfig, train

    config = load_scenario(args.scenario)
    overrides = {}
    if args.config:
        with open(args.config) as fh:
            overrides.update(json.load(fh))
    if args.total_steps is not None:
        overrides["total_steps"] = args.total_steps
    ppo = PpoConfig.from_scenario(config, **overrides)
    artifacts, art_paths = _load_artifacts(config, args.artifacts_dir)
    out = Path(args.out)
    write_manifest(out, "train",
                   {"scenario": config.to_json(),
                    "ppo": {k: getattr(ppo, k) for k in PpoConfig.__dataclass_fields__}},
                   args.seed, art_paths)

    def log(row):
        print(f"update {row.update:4d}  steps {row.env_steps:8d}  "
              f"return {row.mean_return:12.4f}  entropy {row.entropy:6.2f}",
              flush=True)

    res = train(config, ppo, seed=args.seed, artifacts=artifacts, out_dir=out,
                log_fn=log)
    print(f"done: {res.env_steps} env steps in {res.wall_time:.1f}s, "
          f"checkpoint at {out / 'policy.json'}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import evaluate_policy, growth_compliance
    from .nets import PolicyCheckpoint

    config = load_scenario(args.scenario)
    ckpt = PolicyCheckpoint.load(args.policy, expect_scenario=config.scenario)
    artifacts, art_paths = _load_artifacts(config, args.artifacts_dir)
    out = Path(args.out)
    write_manifest(out, "eval",
                   {"scenario": config.to_json(), "n_test": args.n_test,
                    "policy": str(args.policy)}, args.seed, art_paths)
    report = evaluate_policy(ckpt, config, n_test=args.n_test, seed=args.seed,
                             artifacts=artifacts,
                             progress=lambda i, n: print(f"  {i}/{n}", flush=True))
    report.save(out / "report.json")
    report.save_csv(out / "report.csv")
    agg = report.aggregates()
    for t in sorted(agg):
        line = f"step {t}:"
        for key, stats in agg[t].items():
            line += f"  {key} median={stats['median']:.4g}"
        print(line)
    if config.scenario == "hostaware-growth":
        comp = growth_compliance(report, threshold=config.reward.threshold)
        print(f"growth compliance (slack 0.05): {comp['compliance_with_slack']:.3f}")
        with open(out / "growth_compliance.json", "w") as fh:
            json.dump(comp, fh, indent=2)
    print(f"report written to {out / 'report.json'}")
    return 0


def cmd_simulate(args) -> int:
    config = load_scenario(args.scenario)
    theta_map = _parse_kv(args.theta) if args.theta else {}
    names = config.prior.names
    missing = [n for n in names if n not in theta_map]
    if missing:
        print(f"error: missing latent parameters {missing} for {args.scenario}",
              file=sys.stderr)
        return 1
    theta = LatentParams(names, np.array([theta_map[n] for n in names])) \
        if names else LatentParams((), np.array([]))

    if config.scenario.startswith("hostaware"):
        from . import hostaware

        settings = config.host_settings()
        if args.grid:
            grid = np.linspace(config.bounds.lo[0], config.bounds.hi[0], args.grid)
            gfp, lam = hostaware.response_curve(theta, grid, settings)
            writer = csv_writer(args.out)
            writer("action,gfp_ss,lambda_ss")
            for a, g, l in zip(grid, gfp, lam):
                writer(f"{a!r},{g!r},{l!r}")
            return 0
        action_map = _parse_kv(args.action)
        a = float(action_map.get("w", next(iter(action_map.values()))))
        res = hostaware.simulate_to_steady_state(theta, a, settings)
        print(json.dumps({"gfp_ss": res.gfp_ss, "lambda_ss": res.lambda_ss,
                          "residual": res.residual, "steady": res.steady}))
        return 0

    if config.scenario.startswith("repressilator"):
        from . import repressilator as rep
        from .rewards import normalized_autocorrelation

        settings = config.repressilator_settings()
        action_map = _parse_kv(args.action)
        a_phys = np.array([float(action_map[n]) for n in config.bounds.names])
        obs = rep.sample_trajectory(theta, a_phys, config.bounds,
                                    seed=args.seed, settings=settings,
                                    fixed=config.fixed_params)
        traj = obs.series
        writer = csv_writer(args.out)
        writer("t,p1")
        for t, v in zip(traj.times, traj.values):
            writer(f"{t!r},{v!r}")
        trimmed = rep.trim_burn_in(traj, settings.burn_in_frac)
        ac = normalized_autocorrelation(trimmed)
        summary = {"frequency": (1.0 / ac.tau2 if ac.valid else None),
                   "second_peak": (ac.C_tau2 if ac.valid else None),
                   "oscillating": bool(ac.valid)}
        print(json.dumps(summary))
        return 0

    print(f"error: simulate does not support scenario {args.scenario}",
          file=sys.stderr)
    return 1


def cmd_baseline_bo(args) -> int:
    from . import bo as bo_mod
    from . import hostaware
    from .core import sample_prior, scale_action
    from .evaluation import compare_with_bo
    from .nets import PolicyCheckpoint

    config = load_scenario(args.scenario)
    if config.scenario != "hostaware":
        print("error: the BO baseline targets the hostaware scenario",
              file=sys.stderr)
        return 1
    out = Path(args.out)
    write_manifest(out, "baseline-bo",
                   {"scenario": config.to_json(), "n_test": args.n_test,
                    "policy": args.policy and str(args.policy)}, args.seed, {})
    settings = config.host_settings()
    rng = rng_from_key(args.seed, 0x60)

    def curve(theta, xs):
        out_vals = np.empty(xs.size)
        for i, x in enumerate(xs):
            a = scale_action(np.array([x]), config.bounds)[0]
            out_vals[i] = hostaware.simulate_to_steady_state(theta, float(a),
                                                             settings).gfp_ss
        return out_vals

    print("fitting GP prior from simulator curves...", flush=True)
    gp = bo_mod.fit_gp_prior(config.prior, curve, rng)
    bo_mod.save_gp(gp, out / "gp_prior.json")
    print(f"gp: sf2={gp.sf2:.4g} ls={gp.ls:.4g} sn2={gp.sn2:.4g} mu0={gp.mu0:.4g}")

    if args.policy:
        ckpt = PolicyCheckpoint.load(args.policy, expect_scenario=config.scenario)
        cmp = compare_with_bo(ckpt, config, gp, n_test=args.n_test, seed=args.seed,
                              progress=lambda i, n: print(f"  {i}/{n}", flush=True))
        with open(out / "bo_report.json", "w") as fh:
            json.dump(cmp.to_json(), fh)
        print("per-step median (policy - BO):",
              np.round(cmp.per_step_median_diff(), 2).tolist())
    else:
        from .evaluation import _test_theta

        rows = []
        for i in range(args.n_test):
            theta = _test_theta(config, args.seed, i)

            def objective(x):
                a = scale_action(np.array([x]), config.bounds)[0]
                return hostaware.simulate_to_steady_state(theta, float(a),
                                                          settings).gfp_ss

            ep = bo_mod.run_bo_episode(gp, objective, rng_from_key(args.seed, i, 0xB0),
                                       horizon=config.horizon)
            rows.append({"theta_id": i, **ep.to_json()})
        with open(out / "bo_report.json", "w") as fh:
            json.dump(rows, fh)
    print(f"report written to {out}")
    return 0


def cmd_artifacts(args) -> int:
    from .rewards import (build_reward_normalizer, save_artifact,
                          train_optimal_action_regressor)

    config = load_scenario(args.scenario)
    base = Path(args.artifacts_dir) / config.scenario
    base.mkdir(parents=True, exist_ok=True)
    write_manifest(base, "artifacts", {"scenario": config.to_json()},
                   args.seed, {})
    made = {}
    if config.needs_regressor:
        print("building optimal-action regressor (grid-search labels)...",
              flush=True)
        reg = train_optimal_action_regressor(
            config.prior, config.bounds, rng_from_key(args.seed, 0x12),
            threshold=config.reward.threshold)
        save_artifact(reg, base / "regressor.json")
        made["regressor"] = str(base / "regressor.json")
        print(f"regressor validation MAE: {reg.validation_mae:.4f} "
              f"(ceiling {reg.meta['mae_ceiling']:.4f})")
    if config.needs_normalizer:
        print("building reward normalizer (500 prior draws)...", flush=True)
        norm = build_reward_normalizer(
            config.prior, config.bounds, config.reward,
            config.repressilator_settings(), rng_from_key(args.seed, 0x13),
            fixed=config.fixed_params,
            progress=lambda i, n: print(f"  {i}/{n}", flush=True))
        save_artifact(norm, base / "normalizer.json")
        made["normalizer"] = str(base / "normalizer.json")
        print(f"normalizer floor: {norm.floor:.4f}")
    if not made:
        print(f"scenario {config.scenario!r} needs no artifacts")
    else:
        print(json.dumps(made, indent=2))
    return 0


def cmd_serve(args) -> int:
    from .service import AdvisoryService, serve_forever

    service = AdvisoryService(
        checkpoints_dir=args.checkpoints_dir,
        sessions_dir=args.sessions_dir,
        artifacts_dir=args.artifacts_dir,
        ui_dir=args.ui,
    )
    print(f"serving on http://{args.host}:{args.port} "
          f"(checkpoints: {args.checkpoints_dir}, sessions: {args.sessions_dir})")
    serve_forever(service, host=args.host, port=args.port)
    return 0


# ---------------------------------------------------------------------------
# Plumbing
# ---------------------------------------------------------------------------


def _parse_kv(text: str) -> dict[str, float]:
    out = {}
    for part in (text or "").split(","):
        if not part.strip():
            continue
        key, _, val = part.partition("=")
        out[key.strip()] = float(val)
    return out


def csv_writer(out_path: str | None):
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        fh = open(out_path, "w")
        return lambda line: print(line, file=fh)
    return print


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="circuitrl",
                                description="Sequential genetic-circuit design toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--scenario", required=True,
                        help=f"scenario id ({', '.join(SCENARIO_IDS)}) or config path")
        sp.add_argument("--seed", type=int, default=0)
        if out_required:
            sp.add_argument("--out", required=True, help="run output directory")

    sp = sub.add_parser("train", help="train a policy with PPO")
    common(sp)
    sp.add_argument("--config", help="JSON file with PPO overrides")
    sp.add_argument("--total-steps", type=int, dest="total_steps")
    sp.add_argument("--artifacts-dir", default="artifacts")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a trained policy")
    common(sp)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--n-test", type=int, default=1000)
    sp.add_argument("--artifacts-dir", default="artifacts")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("simulate", help="run the scenario simulator once")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--theta", help="comma list name=value of latent parameters")
    sp.add_argument("--action", help="comma list name=value of design parameters")
    sp.add_argument("--grid", type=int,
                    help="emit a response curve over N grid actions (hostaware)")
    sp.add_argument("--out", help="CSV output path (default: stdout)")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("baseline-bo", help="run the BO baseline / comparison")
    common(sp)
    sp.add_argument("--n-test", type=int, default=100)
    sp.add_argument("--policy", help="policy checkpoint for a paired comparison")
    sp.set_defaults(fn=cmd_baseline_bo)

    sp = sub.add_parser("artifacts", help="build scenario artifacts")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--artifacts-dir", default="artifacts")
    sp.set_defaults(fn=cmd_artifacts)

    sp = sub.add_parser("serve", help="start the advisory HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.add_argument("--checkpoints-dir", default="checkpoints")
    sp.add_argument("--sessions-dir", default="sessions")
    sp.add_argument("--artifacts-dir", default="artifacts")
    sp.add_argument("--ui", help="directory with the built web UI bundle")
    sp.set_defaults(fn=cmd_serve)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except KeyboardInterrupt:
        return 130
    except Exception as exc:  # diagnostic exit per CLI contract
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
