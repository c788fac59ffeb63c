"""Command-line interface: ``spais {estimate,ground-truth,trials,export-traj,calibrate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import _accel, seeding
from .environments import ConfigError, DynamicsError, make_env
from .harness import (CALIBRATION_PARAM, calibrate, ground_truth, load_config, output_dir,
                      result_record, run_method, run_trials, write_metrics_csv)
from .traj import NominalSampler, export_csv, rollout_batch

log = logging.getLogger("spais")


def _common(p, seed_required=False):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--env", help="environment name")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="environment parameter override (repeatable)")
    p.add_argument("--output-dir", help="output directory (default: $SPAIS_OUTPUT_DIR or ./spais_runs)")
    p.add_argument("--threads", type=int, help="cap on numba worker threads")
    p.add_argument("--seed", type=int, required=seed_required,
                   help="master seed" + (" (required)" if seed_required else ""))


def _method_flags(p):
    p.add_argument("--method", choices=("mc", "cem", "spais"))
    p.add_argument("--budget", "--n", dest="budget", type=int, help="sample budget")
    p.add_argument("--particles", type=int, help="SPAIS particles per iteration")
    p.add_argument("--lr", type=float, help="SPAIS Adam learning rate")
    p.add_argument("--beta", type=float, help="SPAIS logistic smoothing scale")
    p.add_argument("--elite-frac", type=float, help="CEM elite fraction")


def _gt_flags(p):
    p.add_argument("--gt-samples", type=int, help="ground-truth Monte Carlo samples")
    p.add_argument("--gt-seed", type=int, help="ground-truth seed")


def build_parser():
    parser = argparse.ArgumentParser(prog="spais", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="run one estimator once")
    _common(p, seed_required=True)
    _method_flags(p)

    p = sub.add_parser("ground-truth", help="compute (or load) the cached Monte Carlo reference")
    _common(p)
    _gt_flags(p)

    p = sub.add_parser("trials", help="repeat an estimator and score it against the ground truth")
    _common(p, seed_required=True)
    _method_flags(p)
    _gt_flags(p)
    p.add_argument("--trials", type=int, help="number of trials")
    p.add_argument("--compute-gt", action="store_true",
                   help="compute the ground truth if it is not cached")

    p = sub.add_parser("export-traj", help="sample trajectories to CSV for plotting")
    _common(p, seed_required=True)
    _method_flags(p)
    p.add_argument("--count", type=int, default=200, help="trajectories to export")
    p.add_argument("--out", required=True, help="CSV path")

    p = sub.add_parser("calibrate", help="search a noise scale for a target failure probability")
    _common(p)
    p.add_argument("--target", type=float, required=True, help="target failure probability")
    p.add_argument("--samples", type=int, default=1_000_000, help="MC samples per evaluation")
    p.add_argument("--name", help="parameter to scan (default depends on environment)")
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--steps", type=int, default=12)
    p.add_argument("--write", help="write the calibrated value into this JSON config file")
    return parser


def _parse_params(items):
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            raise ConfigError(f"--param {key}: value {value!r} is not a number/JSON") from None
    return params


def _config_from_args(args):
    over = {}
    if args.env:
        over["env"] = {"name": args.env, "params": {}}
    if getattr(args, "output_dir", None):
        over["output_dir"] = args.output_dir
    if args.seed is not None:
        over["master_seed"] = args.seed
    for flag, key in (("method", "method"), ("budget", "sample_budget"), ("trials", "n_trials")):
        if getattr(args, flag, None) is not None:
            over[key] = getattr(args, flag)
    spais = {k: getattr(args, a) for a, k in (("particles", "n_particles"), ("lr", "lr"),
                                              ("beta", "beta")) if getattr(args, a, None) is not None}
    if spais:
        over["spais"] = spais
    if getattr(args, "elite_frac", None) is not None:
        over["cem"] = {"elite_frac": args.elite_frac}
    gt = {k: getattr(args, a) for a, k in (("gt_samples", "n_samples"), ("gt_seed", "seed"))
          if getattr(args, a, None) is not None}
    if gt:
        over["ground_truth"] = gt
    cfg = load_config(args.config, over)
    extra = _parse_params(args.param)
    if extra:
        cfg["env"]["params"] = {**cfg["env"]["params"], **extra}
        make_env(cfg["env"]["name"], cfg["env"]["params"])
    return cfg


def _gt(cfg, env, compute=True):
    g = cfg["ground_truth"]
    return ground_truth(env, g["n_samples"], g["seed"], output_dir(cfg) / "gt_cache",
                        compute=compute)


def cmd_estimate(args, cfg):
    env = make_env(cfg["env"]["name"], cfg["env"]["params"])
    rows = []
    res, _ = run_method(cfg, cfg["master_seed"], env, on_iteration=rows.append)
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"estimate_{env.name}_{cfg['method']}_{cfg['master_seed']}"
    write_metrics_csv(out / f"{stem}_metrics.csv", rows)
    (out / f"{stem}.json").write_text(
        json.dumps(result_record(cfg, res, cfg["master_seed"]), indent=2))
    print(f"mu_hat={res.mu_hat!r} stderr={res.stderr!r} n={res.n_samples} ess={res.ess:.4g}")
    print(f"wrote {out / (stem + '.json')}")


def cmd_ground_truth(args, cfg):
    env = make_env(cfg["env"]["name"], cfg["env"]["params"])
    mu, se, cached = _gt(cfg, env)
    print(f"mu={mu!r} stderr={se!r} ({'cache' if cached else 'computed'})")


def cmd_trials(args, cfg):
    env = make_env(cfg["env"]["name"], cfg["env"]["params"])
    mu, _, _ = _gt(cfg, env, compute=args.compute_gt)
    if mu <= 0:
        raise ConfigError("ground truth is zero; relative errors are undefined")
    summary = run_trials(cfg, mu)
    rm, rs = summary.eps_rel_mean_std
    am, as_ = summary.eps_abs_mean_std
    print(f"mu={mu:.4g} trials={len(summary.mu_hats)} failed={len(summary.failed)}")
    print(f"eps_rel={rm:.3f} ({rs:.3f})  eps_abs={am:.3f} ({as_:.3f})")
    print(f"wrote {output_dir(cfg) / (env.name + '_' + cfg['method'])}/summary.csv")


def cmd_export(args, cfg):
    env = make_env(cfg["env"]["name"], cfg["env"]["params"])
    seed = cfg["master_seed"]
    if cfg["method"] == "mc":
        sampler = NominalSampler(env)
    else:
        _, run = run_method(cfg, seed, env)
        sampler = run.proposal
    batch = rollout_batch(env, sampler, seeding.rollout_seeds(seed, 1 << 20, args.count))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    export_csv(batch, args.out)
    print(f"wrote {args.count} trajectories to {args.out} "
          f"({int((batch.f >= env.gamma).sum())} failures)")


def cmd_calibrate(args, cfg):
    name = cfg["env"]["name"]
    param = args.name or CALIBRATION_PARAM[name]
    seed = cfg["master_seed"]
    value, mu = calibrate(name, args.target, args.samples, seed, param, args.lo, args.hi,
                          args.steps, base_params=cfg["env"]["params"])
    print(f"{name}.{param}={value!r} mu_hat={mu!r} (n={args.samples})")
    if args.write:
        path = Path(args.write)
        data = json.loads(path.read_text()) if path.exists() else {}
        data.setdefault("env", {"name": name, "params": {}})
        data["env"].setdefault("params", {})[param] = value
        path.write_text(json.dumps(data, indent=2) + "\n")
        print(f"updated {path}")


COMMANDS = {"estimate": cmd_estimate, "ground-truth": cmd_ground_truth, "trials": cmd_trials,
            "export-traj": cmd_export, "calibrate": cmd_calibrate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _accel.set_threads(args.threads)
        cfg = _config_from_args(args)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, DynamicsError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"spais {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
