"""Monte Carlo and cross-entropy-method estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import seeding
from .engine import EstimateResult, ISBuffer, importance_sampling_estimate
from .traj import rollout_batch

MC_CHUNK = 200_000


def nominal_f_chunks(env, n_samples, seed, chunk=MC_CHUNK):
    """Yield f values of nominal rollouts in chunks.

    Chunk c draws its noise from ``mix_seed(seed, MC_STREAM, c)`` so the values
    depend only on (env, seed, chunk size), never on the backend in use.
    """
    done, c = 0, 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        eps = seeding.rng(seed, seeding.MC_STREAM, c).standard_normal((m, env.horizon, env.d_x))
        f = env.simulate_nominal(eps)
        if not np.all(np.isfinite(f) | np.isneginf(f)):
            raise FloatingPointError(f"{env.name}: non-finite f in Monte Carlo chunk {c}")
        yield f
        done += m
        c += 1


def mc_estimate(env, n_samples, seed, chunk=MC_CHUNK, on_chunk=None):
    """Failure fraction over ``n_samples`` nominal rollouts.

    ``stderr`` is the binomial sqrt(mu (1 - mu) / n).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    failures, total, history = 0, 0, []
    for c, f in enumerate(nominal_f_chunks(env, n_samples, seed, chunk)):
        failures += int(np.count_nonzero(f >= env.gamma))
        total += f.size
        row = {"method": "mc", "iteration": c, "n_samples_total": total,
               "mu_hat_so_far": failures / total, "acceptance_rate": math.nan,
               "mean_loss": math.nan, "ess": float(failures),
               "mean_smoothed_log_weight": math.nan}
        history.append(row)
        if on_chunk is not None:
            on_chunk(row)
    mu = failures / total
    return EstimateResult(mu, total, float(failures), math.sqrt(mu * (1.0 - mu) / total), history)


class CEMProposal:
    """State-independent diagonal Gaussian applied at every timestep."""

    def __init__(self, mean, std, std_floor):
        self.mean = np.array(mean, dtype=float)
        self.std_floor = np.array(std_floor, dtype=float)
        self.std = np.maximum(np.array(std, dtype=float), self.std_floor)
        self.d_x = self.mean.shape[0]

    def mean_std(self, states):
        n = np.atleast_2d(states).shape[0]
        return np.broadcast_to(self.mean, (n, self.d_x)), np.broadcast_to(self.std, (n, self.d_x))

    @classmethod
    def from_nominal(cls, env, floor_fraction=0.1):
        m, s = env.nominal_mean_std(env.initial_states(1))
        return cls(m[0], s[0], floor_fraction * s[0])


@dataclass
class CEMConfig:
    n_samples: int = 500
    n_iter: int = 99
    elite_frac: float = 0.1
    smoothing_alpha: float = 0.7
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.elite_frac <= 1.0:
            raise ValueError("elite_frac must be in (0, 1]")
        if not 0.0 < self.smoothing_alpha <= 1.0:
            raise ValueError("smoothing_alpha must be in (0, 1]")
        if self.n_samples < 1 or self.n_iter < 0:
            raise ValueError("need n_samples >= 1 and n_iter >= 0")

    @classmethod
    def from_budget(cls, budget, n_samples=500, **kw):
        if budget < n_samples:
            raise ValueError(f"budget {budget} is smaller than one batch of {n_samples}")
        return cls(n_samples=n_samples, n_iter=budget // n_samples - 1, **kw)


@dataclass
class CEMRun:
    result: EstimateResult
    proposal: CEMProposal
    buffer: ISBuffer


def select_elites(f, gamma, elite_frac):
    """Indices of the top ceil(elite_frac N) trajectories, or every failure if more numerous."""
    n_elite = math.ceil(elite_frac * f.size)
    failures = np.flatnonzero(f >= gamma)
    if failures.size > n_elite:
        return failures
    return np.argsort(-f, kind="stable")[:n_elite]


def refit(proposal, batch, elites, alpha):
    """Likelihood-ratio weighted Gaussian fit to elite disturbances pooled over time."""
    lw = batch.log_weights()[elites]
    w = np.exp(lw - lw.max())
    x = batch.disturbances[elites]                      # (n_elite, T, d_x)
    wt = np.repeat(w, x.shape[1]) / (w.sum() * x.shape[1])
    flat = x.reshape(-1, x.shape[2])
    mean = wt @ flat
    std = np.sqrt(wt @ (flat - mean) ** 2)
    return CEMProposal(alpha * mean + (1 - alpha) * proposal.mean,
                       alpha * std + (1 - alpha) * proposal.std, proposal.std_floor)


def run_cem(env, config, proposal=None, on_iteration=None):
    """Multilevel cross-entropy IS with a pooled multi-proposal estimate."""
    q = CEMProposal.from_nominal(env) if proposal is None else proposal
    buffer = ISBuffer()
    history = []
    for k in range(config.n_iter + 1):
        batch = rollout_batch(env, q, seeding.rollout_seeds(config.seed, k, config.n_samples))
        buffer.append(batch.f, batch.log_weights(), k, batch.critical)
        est = importance_sampling_estimate(buffer, env.gamma)
        row = {"method": "cem", "iteration": k, "n_samples_total": len(buffer),
               "mu_hat_so_far": est.mu_hat, "acceptance_rate": math.nan, "mean_loss": math.nan,
               "ess": est.ess, "mean_smoothed_log_weight": math.nan}
        history.append(row)
        if on_iteration is not None:
            on_iteration(row)
        if k < config.n_iter:
            q = refit(q, batch, select_elites(batch.f, env.gamma, config.elite_frac),
                      config.smoothing_alpha)
    result = importance_sampling_estimate(buffer, env.gamma)
    result.per_iteration = history
    return CEMRun(result, q, buffer)
