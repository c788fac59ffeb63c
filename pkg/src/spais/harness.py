"""Experiment configuration, ground truth, trials and calibration.

Config files are JSON; see ``DEFAULT_CONFIG`` for every key. Unknown keys are
rejected so that typos cannot silently fall back to defaults.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .baselines import CEMConfig, mc_estimate, run_cem
from .engine import METRIC_COLUMNS, SPAISConfig, run_spais
from .environments import ConfigError, make_env
from .proposal import GaussianProposal, pretrain_to_nominal

log = logging.getLogger(__name__)

METHODS = ("mc", "cem", "spais")
OUTPUT_ENV_VAR = "SPAIS_OUTPUT_DIR"

DEFAULT_CONFIG = {
    "env": {"name": "pendulum", "params": {}},
    "method": "spais",
    "sample_budget": 50000,
    "n_trials": 10,
    "master_seed": 0,
    "output_dir": None,
    "ground_truth": {"n_samples": 10_000_000, "seed": 20240601},
    "mc": {"chunk": 200_000},
    "cem": {"n_samples": 500, "elite_frac": 0.1, "smoothing_alpha": 0.7},
    "spais": {
        "n_particles": 500,
        "beta": 0.01,
        "lr": 0.03,
        "pretrain": {"n_rollouts": 200, "n_epochs": 300, "lr": 0.01, "kl_tol": 0.01},
    },
}

# parameter scanned by `calibrate` for each environment
CALIBRATION_PARAM = {"toy": "std", "pendulum": "sigma_x", "crosswalk": "sigma_ped_acc",
                     "collision": "sigma_vz"}


def _merge(base, update, path=""):
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and key != "params":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + key!r} must be an object")
            _merge(base[key], value, path + key + ".")
        else:
            base[key] = value
    return base


def load_config(path=None, overrides=None):
    """Defaults <- config file <- overrides (nested dicts), then validated."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must contain a JSON object")
        _merge(cfg, data)
    if overrides:
        _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg["method"] not in METHODS:
        raise ConfigError(f"unknown method {cfg['method']!r}; choose from {list(METHODS)}")
    make_env(cfg["env"]["name"], cfg["env"]["params"])
    batch = {"mc": 1, "cem": cfg["cem"]["n_samples"], "spais": cfg["spais"]["n_particles"]}
    if cfg["sample_budget"] < batch[cfg["method"]]:
        raise ConfigError("sample_budget must cover at least one batch")
    if cfg["n_trials"] < 1:
        raise ConfigError("n_trials must be >= 1")


def output_dir(cfg):
    return Path(cfg["output_dir"] or os.environ.get(OUTPUT_ENV_VAR, "spais_runs"))


def trial_seed(master_seed, i):
    return seeding.mix_seed(master_seed, i)


# -- ground truth ------------------------------------------------------------
def _gt_cache_path(cache_dir, env, n_samples, seed):
    return Path(cache_dir) / f"gt_{env.name}_{env.param_hash()[:16]}_{n_samples}_{seed}.json"


def ground_truth(env, n_samples=10_000_000, seed=20240601, cache_dir=None, chunk=200_000,
                 compute=True):
    """Monte Carlo reference failure probability, cached on disk.

    Returns ``(mu, stderr, from_cache)``. A cache entry whose stored parameter
    hash differs from the environment's is ignored and recomputed.
    """
    path = None
    if cache_dir is not None:
        path = _gt_cache_path(cache_dir, env, n_samples, seed)
        if path.exists():
            with open(path) as fh:
                entry = json.load(fh)
            if entry.get("param_hash") == env.param_hash():
                return entry["mu"], entry["stderr"], True
            log.warning("ground-truth cache %s has a stale parameter hash; recomputing", path)
    if not compute:
        raise FileNotFoundError(
            f"no ground-truth cache for {env.name} (n={n_samples}, seed={seed}); "
            "run `spais ground-truth` or pass --compute-gt")
    res = mc_estimate(env, n_samples, seed, chunk=chunk)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            json.dump({"env": env.name, "params": env.params, "param_hash": env.param_hash(),
                       "n_samples": n_samples, "seed": seed, "mu": res.mu_hat,
                       "stderr": res.stderr, "failures": int(res.ess)}, fh, indent=2)
    return res.mu_hat, res.stderr, False


# -- single estimation -------------------------------------------------------
def run_method(cfg, seed, env=None, on_iteration=None):
    """One estimate with the configured method; returns (EstimateResult, run object)."""
    env = env or make_env(cfg["env"]["name"], cfg["env"]["params"])
    budget = cfg["sample_budget"]
    method = cfg["method"]
    if method == "mc":
        res = mc_estimate(env, budget, seed, chunk=cfg["mc"]["chunk"], on_chunk=on_iteration)
        return res, None
    if method == "cem":
        c = cfg["cem"]
        run = run_cem(env, CEMConfig.from_budget(budget, c["n_samples"], elite_frac=c["elite_frac"],
                                                 smoothing_alpha=c["smoothing_alpha"], seed=seed),
                      on_iteration=on_iteration)
        return run.result, run
    s = cfg["spais"]
    p = s["pretrain"]
    q0 = pretrain_to_nominal(GaussianProposal(env.d_s, env.d_x), env, p["n_rollouts"],
                             p["n_epochs"], seed=seed, lr=p["lr"], kl_tol=p["kl_tol"])
    run = run_spais(env, q0, SPAISConfig.from_budget(budget, s["n_particles"], beta=s["beta"],
                                                     lr=s["lr"], seed=seed),
                    on_iteration=on_iteration)
    return run.result, run


def write_metrics_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def result_record(cfg, res, seed, mu_truth=None):
    rel = None if mu_truth is None else relative_errors(res.mu_hat, mu_truth)
    return {"method": cfg["method"], "env": cfg["env"]["name"], "mu_hat": res.mu_hat,
            "mu_truth": mu_truth, "eps_rel": None if rel is None else rel[0],
            "eps_abs": None if rel is None else rel[1], "n_samples": res.n_samples,
            "stderr": res.stderr, "ess": res.ess, "seed": seed, "config": cfg}


# -- trials --------------------------------------------------------------------
def relative_errors(mu_hat, mu):
    """(eps_rel, eps_abs) = ((mu_hat - mu) / mu, |mu_hat - mu| / mu)."""
    rel = (mu_hat - mu) / mu
    return rel, abs(rel)


def _mean_std(a):
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


@dataclass
class TrialSummary:
    mu: float
    mu_hats: list
    seeds: list
    eps_rel: list = field(init=False)
    eps_abs: list = field(init=False)
    failed: list = field(default_factory=list)

    def __post_init__(self):
        errs = [relative_errors(m, self.mu) for m in self.mu_hats]
        self.eps_rel = [e[0] for e in errs]
        self.eps_abs = [e[1] for e in errs]

    @property
    def eps_rel_mean_std(self):
        return _mean_std(self.eps_rel)

    @property
    def eps_abs_mean_std(self):
        return _mean_std(self.eps_abs)

    def to_dict(self):
        rm, rs = self.eps_rel_mean_std
        am, as_ = self.eps_abs_mean_std
        return {"mu": self.mu, "mu_hats": self.mu_hats, "seeds": self.seeds,
                "eps_rel": self.eps_rel, "eps_abs": self.eps_abs, "eps_rel_mean": rm,
                "eps_rel_std": rs, "eps_abs_mean": am, "eps_abs_std": as_, "failed": self.failed}

    @classmethod
    def from_trial_files(cls, paths):
        """Rebuild a summary from persisted per-trial result JSONs."""
        recs = [json.loads(Path(p).read_text()) for p in sorted(paths)]
        mus = {r["mu_truth"] for r in recs}
        if len(mus) != 1:
            raise ValueError("trial files disagree on the ground truth")
        return cls(mus.pop(), [r["mu_hat"] for r in recs], [r["seed"] for r in recs])


def write_summary_csv(path, summary):
    rm, rs = summary.eps_rel_mean_std
    am, as_ = summary.eps_abs_mean_std
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "seed", "mu_hat", "mu_truth", "eps_rel", "eps_abs"])
        for i, (seed, m, r, a) in enumerate(zip(summary.seeds, summary.mu_hats,
                                                summary.eps_rel, summary.eps_abs)):
            w.writerow([i, seed, repr(m), repr(summary.mu), repr(r), repr(a)])
        w.writerow(["mean", "", "", repr(summary.mu), repr(rm), repr(am)])
        w.writerow(["std", "", "", repr(summary.mu), repr(rs), repr(as_)])


def run_trials(cfg, mu_truth, out_dir=None):
    """Run ``n_trials`` independent estimates and write per-trial and summary files.

    Files under ``out_dir``: ``trial_XX.json`` and ``metrics_trial_XX.csv`` per
    trial, ``summary.csv`` and ``summary.json``. Wall-clock timings go only to
    ``run.log`` so that the other files are reproducible byte for byte.
    """
    out = Path(out_dir) if out_dir is not None else (
        output_dir(cfg) / f"{cfg['env']['name']}_{cfg['method']}")
    out.mkdir(parents=True, exist_ok=True)
    env = make_env(cfg["env"]["name"], cfg["env"]["params"])
    mu_hats, seeds, failed = [], [], []
    with open(out / "run.log", "a") as logf:
        for i in range(cfg["n_trials"]):
            seed = trial_seed(cfg["master_seed"], i)
            rows = []
            t0 = time.time()
            try:
                res, _ = run_method(cfg, seed, env, on_iteration=rows.append)
            except (ArithmeticError, RuntimeError, ValueError) as exc:
                log.warning("trial %d (seed %d) aborted and excluded: %s", i, seed, exc)
                failed.append({"trial": i, "seed": seed, "error": str(exc)})
                logf.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} trial {i} FAILED {exc}\n")
                continue
            write_metrics_csv(out / f"metrics_trial_{i:02d}.csv", rows)
            with open(out / f"trial_{i:02d}.json", "w") as fh:
                json.dump(result_record(cfg, res, seed, mu_truth), fh, indent=2)
            mu_hats.append(res.mu_hat)
            seeds.append(seed)
            logf.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} trial {i} seed {seed} "
                       f"mu_hat {res.mu_hat!r} {time.time() - t0:.2f}s\n")
    summary = TrialSummary(mu_truth, mu_hats, seeds, failed)
    write_summary_csv(out / "summary.csv", summary)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2)
    return summary


# -- calibration ---------------------------------------------------------------
def calibrate(env_name, target, n_samples=1_000_000, seed=0, param=None, lo=None, hi=None,
              n_steps=12, base_params=None):
    """Bisect a noise scale (in log space) until the MC failure probability brackets ``target``.

    All evaluations reuse the same standard-normal noise, so the estimated
    failure probability is a near-monotone function of the scale. Returns
    ``(value, mu_hat)`` for the final midpoint.
    """
    param = param or CALIBRATION_PARAM[env_name]
    base = dict(base_params or {})
    start = make_env(env_name, base).params[param]
    lo = start / 4 if lo is None else lo
    hi = start * 4 if hi is None else hi

    def mu_at(v):
        return mc_estimate(make_env(env_name, {**base, param: v}), n_samples, seed).mu_hat

    for _ in range(n_steps):
        mid = math.sqrt(lo * hi)
        if mu_at(mid) < target:
            lo = mid
        else:
            hi = mid
    value = math.sqrt(lo * hi)
    return value, mu_at(value)
