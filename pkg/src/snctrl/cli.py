"""Command-line entry point for reproducible train/certify/simulate runs.

Every artifact embeds the sha256 of the producing configuration; reruns with
the same configuration write byte-identical CSV/JSON (SVG output carries no
timestamps either). Exit codes: 0 success, 2 configuration error,
3 certification infeasible, 4 numeric failure.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import svgplot
from .certify_post import certificate_from_dict, search_vbar
from .certify_pre import check_small_gain
from .envs import ENV_MAKERS, get_env
from .errors import (
    CertificateRejected,
    ContractError,
    Infeasible,
    NumericError,
)
from .plant import l2_gain, load_plant, simulate, spectral_radius
from .policy import load_policy, save_policy
from .roa_tools import (
    GridSpec,
    ellipse_boundary,
    empirical_roa,
    soundness_audit,
    volume_proxy,
)
from .trainer import PpoConfig, evaluate, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERIC = 4

_PPO_FIELDS = set(PpoConfig.__dataclass_fields__)
_TOP_FIELDS = {"env", "arch", "mode", "deltas", "seeds", "seed", "ppo",
               "certify", "grid", "out"}
_CERTIFY_FIELDS = {"mu_lo", "mu_max", "solver"}


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def validate_run_config(config):
    """Reject unknown fields anywhere in the run configuration."""
    if not isinstance(config, dict):
        raise ContractError("run config must be a JSON object")
    unknown = set(config) - _TOP_FIELDS
    if unknown:
        raise ContractError(f"unknown config fields: {sorted(unknown)}")
    for key in ("env", "arch", "mode"):
        if key not in config:
            raise ContractError(f"config is missing required field '{key}'")
    if config["env"] not in ENV_MAKERS:
        raise ContractError(
            f"unknown environment '{config['env']}'; "
            f"valid names: {sorted(ENV_MAKERS)}")
    ppo = config.get("ppo", {})
    if not isinstance(ppo, dict):
        raise ContractError("'ppo' must be an object of PpoConfig fields")
    unknown = set(ppo) - _PPO_FIELDS
    if unknown:
        raise ContractError(f"unknown ppo config fields: {sorted(unknown)}")
    cert = config.get("certify", {})
    if not isinstance(cert, dict):
        raise ContractError("'certify' must be an object")
    unknown = set(cert) - _CERTIFY_FIELDS
    if unknown:
        raise ContractError(f"unknown certify config fields: {sorted(unknown)}")
    if "seeds" in config and "seed" in config:
        raise ContractError("give either 'seed' or 'seeds', not both")
    return config


def _seeds(config, override):
    if override is not None:
        return [int(override)]
    if "seeds" in config:
        return [int(s) for s in config["seeds"]]
    return [int(config.get("seed", 0))]


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, header, rows, chash):
    lines = [f"# config_hash={chash}", ",".join(header)]
    for row in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_csv(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(line.split(","))
    header, data = rows[0], rows[1:]
    return header, [[float(v) for v in row] for row in data]


def _load_system(args):
    """Plant plus optional env context from --env/--plant flags."""
    env = None
    if getattr(args, "env", None):
        env = get_env(args.env)
        plant = env.plant
    elif getattr(args, "plant", None):
        plant = load_plant(args.plant)
    else:
        raise ContractError("give either --env NAME or --plant PATH")
    return plant, env


def parse_grid(text):
    axes = []
    for part in text.split(","):
        fields = part.split(":")
        if len(fields) != 4:
            raise ContractError(
                f"bad grid axis '{part}'; expected name:lo:hi:count")
        name, lo, hi, count = fields
        axes.append((name, float(lo), float(hi), int(count)))
    return GridSpec(axes=tuple(axes))


def cmd_train(args):
    with open(args.config) as fh:
        config = json.load(fh)
    validate_run_config(config)
    out_dir = args.out or config.get("out") or "out"
    os.makedirs(out_dir, exist_ok=True)
    seeds = _seeds(config, args.seed)
    chash = config_hash({**config, "seeds": seeds})

    env = get_env(config["env"])
    deltas = config.get("deltas", 1.0)
    per_seed_curves = []
    artifacts = []
    for seed in seeds:
        ppo = PpoConfig(**{**config.get("ppo", {}), "seed": seed})
        policy, curve = train(env, config["arch"], config["mode"], deltas, ppo)
        ppath = os.path.join(out_dir, f"policy_seed{seed}.json")
        save_policy(policy, ppath)
        cpath = os.path.join(out_dir, f"curve_seed{seed}.csv")
        _write_csv(cpath, ("env_steps", "mean", "min", "max"),
                   curve.rows, chash)
        per_seed_curves.append(curve)
        artifacts += [ppath, cpath]
        print(f"seed {seed}: final eval return {curve.final_mean():.3f}")

    # Aggregate across seeds: min/mean/max of the per-seed mean returns.
    steps = [r[0] for r in per_seed_curves[0].rows]
    agg = []
    for i, s in enumerate(steps):
        means = [c.rows[i][1] for c in per_seed_curves]
        agg.append((s, float(np.mean(means)), float(np.min(means)),
                    float(np.max(means))))
    apath = os.path.join(out_dir, "curve.csv")
    _write_csv(apath, ("env_steps", "mean", "min", "max"), agg, chash)
    artifacts.append(apath)

    _write_json(os.path.join(out_dir, "manifest.json"), {
        "command": "train",
        "config": config,
        "seeds": seeds,
        "config_hash": chash,
        "artifacts": sorted(os.path.basename(a) for a in artifacts),
    })
    print(f"wrote {len(artifacts) + 1} artifacts to {out_dir}")
    return EXIT_OK


def cmd_gain(args):
    plant, _ = _load_system(args)
    result = l2_gain(plant, tol=args.tol)
    payload = result.to_dict()
    payload["spectral_radius"] = spectral_radius(plant)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def cmd_certify_pre(args):
    plant, _ = _load_system(args)
    policy = load_policy(args.policy)
    report = check_small_gain(plant, policy)
    payload = report.to_dict()
    payload["product_is_upper_bound"] = True
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "smallgain.json"), payload)
    return EXIT_OK if report.certified else EXIT_INFEASIBLE


def cmd_certify_post(args):
    plant, _ = _load_system(args)
    policy = load_policy(args.policy)
    note = None
    if policy.mode == "pre":
        note = ("pre-mode policy: all layers already normalized, "
                "analyzed as-is")
    try:
        cert, frontier = search_vbar(plant, policy, mu_lo=args.mu_lo,
                                     mu_hi=args.mu_max, solver=args.solver)
    except Infeasible as exc:
        print(json.dumps({"feasible": False, "reason": str(exc)},
                         sort_keys=True))
        return EXIT_INFEASIBLE
    payload = cert.to_dict()
    payload["feasible"] = True
    payload["frontier"] = [[mu, bool(ok)] for mu, ok in frontier]
    payload["volume_proxy"] = volume_proxy(cert.ellipsoid)
    if note:
        payload["note"] = note
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        chash = config_hash({"policy": args.policy, "mu_lo": args.mu_lo,
                             "mu_max": args.mu_max})
        _write_json(os.path.join(args.out, "certificate.json"), payload)
        _write_csv(os.path.join(args.out, "frontier.csv"),
                   ("mu", "feasible"),
                   [(mu, int(ok)) for mu, ok in frontier], chash)
    return EXIT_OK


def cmd_simulate(args):
    plant, env = _load_system(args)
    policy = load_policy(args.policy)
    x0 = np.array([float(v) for v in args.x0.split(",")])
    horizon = args.horizon or (env.max_episode_steps if env else 200)
    termination = env.termination if env else None
    reward = env.reward if env else None
    traj = simulate(plant, policy, x0, horizon,
                    termination=termination, reward=reward)
    rows = []
    for k in range(traj.steps):
        row = [k] + [float(v) for v in traj.states[k]]
        row += [float(v) for v in traj.inputs[k]]
        if traj.rewards is not None:
            row.append(float(traj.rewards[k]))
        rows.append(tuple(row))
    n = plant.n_states
    header = ["k"] + [f"x{i}" for i in range(n)]
    header += [f"u{i}" for i in range(plant.n_inputs)]
    if traj.rewards is not None:
        header.append("reward")
    out_dir = args.out or "out"
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash({"x0": args.x0, "horizon": horizon,
                         "policy": args.policy})
    path = os.path.join(out_dir, "trajectory.csv")
    _write_csv(path, header, rows, chash)
    print(json.dumps({
        "steps": traj.steps,
        "diverged": traj.diverged,
        "terminated": traj.terminated,
        "final_norm": float(np.linalg.norm(traj.states[-1])),
        "total_reward": traj.total_reward(),
        "csv": path,
    }, sort_keys=True))
    return EXIT_OK


def cmd_roa_grid(args):
    plant, _ = _load_system(args)
    policy = load_policy(args.policy)
    grid = parse_grid(args.grid)
    if len(grid.axes) != plant.n_states:
        raise ContractError(
            f"grid has {len(grid.axes)} axes but the plant has "
            f"{plant.n_states} states")
    report = empirical_roa(plant, policy, grid,
                           horizon=args.horizon, tol=args.tol)
    out_dir = args.out or "out"
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash({"grid": args.grid, "horizon": args.horizon,
                         "tol": args.tol, "policy": args.policy})
    rows = [tuple(float(v) for v in p) + (int(c),)
            for p, c in zip(report.points, report.converged)]
    header = list(grid.names) + ["converged"]
    _write_csv(os.path.join(out_dir, "roa_grid.csv"), header, rows, chash)
    summary = {
        "n_points": int(report.points.shape[0]),
        "n_converged": int(report.converged.sum()),
        "horizon": report.horizon,
        "tol": report.tol,
    }
    if args.cert:
        with open(args.cert) as fh:
            cert = certificate_from_dict(json.load(fh))
        audit = soundness_audit(cert, report)
        summary["audit"] = {
            "inside_ellipsoid": audit.n_inside,
            "violations": int(audit.violations.shape[0]),
            "sound": bool(audit.ok),
        }
        boundary = ellipse_boundary(cert.ellipsoid, axes=(0, 1))
        _write_csv(os.path.join(out_dir, "ellipse_boundary.csv"),
                   [f"x{i}" for i in range(boundary.shape[1])],
                   [tuple(float(v) for v in p) for p in boundary], chash)
    _write_json(os.path.join(out_dir, "roa_summary.json"), summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_report(args):
    out_dir = args.out
    if not os.path.isdir(out_dir):
        raise ContractError(f"run directory '{out_dir}' does not exist")
    env = get_env(args.env) if args.env else None
    panels = []

    curve_path = os.path.join(out_dir, "curve.csv")
    if os.path.exists(curve_path):
        _, rows = _read_csv(curve_path)
        p = svgplot.Panel(title="(a) Learning curve", xlabel="env steps",
                          ylabel="eval return")
        xs = [r[0] for r in rows]
        p.band(xs, [r[2] for r in rows], [r[3] for r in rows])
        p.polyline(xs, [r[1] for r in rows])
        panels.append(p)

    traj_path = os.path.join(out_dir, "trajectory.csv")
    if not os.path.exists(traj_path) and env is not None:
        pol_path = _first_policy(out_dir)
        if pol_path:
            policy = load_policy(pol_path)
            rollout = evaluate(env, policy)[0]
            p = svgplot.Panel(title="(b) Evaluation trajectory",
                              xlabel="step", ylabel="state")
            for i in range(rollout.trajectory.states.shape[1]):
                colors = ["#1f6fb2", "#c23b22", "#2e8540", "#8456c8"]
                p.polyline(range(rollout.trajectory.states.shape[0]),
                           rollout.trajectory.states[:, i],
                           color=colors[i % 4])
            panels.append(p)
    elif os.path.exists(traj_path):
        header, rows = _read_csv(traj_path)
        p = svgplot.Panel(title="(b) Evaluation trajectory", xlabel="step",
                          ylabel="state")
        colors = ["#1f6fb2", "#c23b22", "#2e8540", "#8456c8"]
        n_states = sum(1 for h in header if h.startswith("x"))
        for i in range(n_states):
            col = header.index(f"x{i}")
            p.polyline([r[0] for r in rows], [r[col] for r in rows],
                       color=colors[i % 4])
        panels.append(p)

    frontier_path = os.path.join(out_dir, "frontier.csv")
    if os.path.exists(frontier_path):
        _, rows = _read_csv(frontier_path)
        p = svgplot.Panel(title="(c) Feasibility frontier",
                          xlabel="sector bound mu", ylabel="feasible")
        feas = [r for r in rows if r[1] > 0]
        infeas = [r for r in rows if r[1] <= 0]
        if feas:
            p.scatter([r[0] for r in feas], [1.0] * len(feas),
                      color="#2e8540", radius=3.0)
        if infeas:
            p.scatter([r[0] for r in infeas], [0.0] * len(infeas),
                      color="#c23b22", radius=3.0)
        p.set_limits(0.0, max(r[0] for r in rows) * 1.05, -0.3, 1.3)
        panels.append(p)

    grid_path = os.path.join(out_dir, "roa_grid.csv")
    if os.path.exists(grid_path):
        header, rows = _read_csv(grid_path)
        p = svgplot.Panel(title="(d) ROA: grid and certified ellipsoid",
                          xlabel=header[0], ylabel=header[1])
        conv = [r for r in rows if r[-1] > 0]
        div = [r for r in rows if r[-1] <= 0]
        if div:
            p.scatter([r[0] for r in div], [r[1] for r in div],
                      color="#d9d9d9", radius=1.2)
        if conv:
            p.scatter([r[0] for r in conv], [r[1] for r in conv],
                      color="#9ecae1", radius=1.2)
        bpath = os.path.join(out_dir, "ellipse_boundary.csv")
        if os.path.exists(bpath):
            _, brows = _read_csv(bpath)
            closed = brows + brows[:1]
            p.polyline([r[0] for r in closed], [r[1] for r in closed],
                       color="#c23b22", width=2.0)
        panels.append(p)

    if not panels:
        raise ContractError(
            f"no report inputs found in '{out_dir}' (expected curve.csv, "
            "trajectory.csv, frontier.csv or roa_grid.csv)")
    path = os.path.join(out_dir, "report.svg")
    with open(path, "w") as fh:
        fh.write(svgplot.compose(panels, cols=2))
    print(json.dumps({"report": path, "panels": len(panels)}, sort_keys=True))
    return EXIT_OK


def _first_policy(out_dir):
    names = sorted(n for n in os.listdir(out_dir)
                   if n.startswith("policy") and n.endswith(".json"))
    return os.path.join(out_dir, names[0]) if names else None


def build_parser():
    parser = argparse.ArgumentParser(
        prog="snctrl",
        description="Train and certify spectrally normalized neural "
                    "controllers for discrete-time LTI plants.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a policy from a JSON run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gain", help="L2 gain (H-infinity norm) of a plant")
    p.add_argument("--plant", default=None)
    p.add_argument("--env", default=None)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gain)

    p = sub.add_parser("certify-pre", help="small-gain certificate")
    p.add_argument("--plant", default=None)
    p.add_argument("--env", default=None)
    p.add_argument("--policy", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify_pre)

    p = sub.add_parser("certify-post", help="Lyapunov LMI certificate + ROA")
    p.add_argument("--plant", default=None)
    p.add_argument("--env", default=None)
    p.add_argument("--policy", required=True)
    p.add_argument("--mu-lo", type=float, default=0.01)
    p.add_argument("--mu-max", type=float, default=4.0)
    p.add_argument("--solver", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_certify_post)

    p = sub.add_parser("simulate", help="closed-loop rollout to CSV")
    p.add_argument("--plant", default=None)
    p.add_argument("--env", default=None)
    p.add_argument("--policy", required=True)
    p.add_argument("--x0", required=True,
                   help="comma-separated start state, e.g. '3.14,0'")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("roa-grid", help="empirical ROA over a state grid")
    p.add_argument("--plant", default=None)
    p.add_argument("--env", default=None)
    p.add_argument("--policy", required=True)
    p.add_argument("--grid", required=True,
                   help="per-axis name:lo:hi:count, comma separated")
    p.add_argument("--horizon", type=int, default=400)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--cert", default=None,
                   help="certificate JSON to audit against the grid")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_roa_grid)

    p = sub.add_parser("report", help="render SVG panels from run artifacts")
    p.add_argument("--out", required=True)
    p.add_argument("--env", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ContractError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericError, CertificateRejected) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
