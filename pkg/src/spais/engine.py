"""Adaptive importance sampling with a state-dependent proposal.

Each iteration samples N trajectories from the current proposal, appends
their (f, log p/q) pairs to the IS buffer, runs one independent MH step per
particle against the logistic-relaxed failure target, and takes one optimiser
step on the cross-entropy of the accepted particle set. The final estimate is
the plain IS average over the whole buffer with the hard failure indicator.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import seeding
from .imh import ParticleSet, update_particle_set
from .proposal import Adam, loss_and_gradient
from .traj import rollout_batch, smoothed_log_weight

METRIC_COLUMNS = ("method", "iteration", "n_samples_total", "mu_hat_so_far", "acceptance_rate",
                  "mean_loss", "ess", "mean_smoothed_log_weight")


class ISBuffer:
    """Append-only store of (f, log weight under the generating proposal, iteration).

    ``critical`` keeps the visited state at which f was attained so that
    failure modes can be told apart after the fact.
    """

    def __init__(self):
        self._f, self._lw, self._it, self._crit = [], [], [], []

    def append(self, f, log_weights, iteration, critical=None):
        f = np.asarray(f, dtype=float).ravel()
        lw = np.asarray(log_weights, dtype=float).ravel()
        if f.shape != lw.shape:
            raise ValueError("f and log_weights must have the same length")
        self._f.append(f.copy())
        self._lw.append(lw.copy())
        self._it.append(np.full(f.shape, iteration, dtype=np.int64))
        self._crit.append(None if critical is None else np.array(critical, dtype=float))

    def __len__(self):
        return sum(a.size for a in self._f)

    @property
    def f(self):
        return np.concatenate(self._f) if self._f else np.empty(0)

    @property
    def log_weights(self):
        return np.concatenate(self._lw) if self._lw else np.empty(0)

    @property
    def iterations(self):
        return np.concatenate(self._it) if self._it else np.empty(0, dtype=np.int64)

    @property
    def critical(self):
        if not self._crit or any(c is None for c in self._crit):
            return None
        return np.concatenate(self._crit)


@dataclass
class EstimateResult:
    mu_hat: float
    n_samples: int
    ess: float
    stderr: float
    per_iteration: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _is_terms(f, log_weights, gamma):
    fail = np.asarray(f) >= gamma
    w = np.zeros(len(fail))
    w[fail] = np.exp(np.asarray(log_weights)[fail])
    return w


def weighted_ess(terms):
    """(sum w)^2 / sum w^2; zero when every term is zero."""
    terms = np.asarray(terms, dtype=float)
    top = terms.max() if terms.size else 0.0
    if top <= 0.0:
        return 0.0
    scaled = terms / top
    return float(scaled.sum() ** 2 / np.sum(scaled * scaled))


def importance_sampling_estimate(buffer, gamma):
    """mu_hat = (1/|D|) sum_i w_i 1{f_i >= gamma} over the buffer.

    ``stderr`` is the sample standard deviation of the terms over sqrt(|D|);
    ``ess`` is computed over the indicator-weighted terms and is 0 when the
    buffer holds no failures.
    """
    n = len(buffer)
    if n == 0:
        raise ValueError("importance sampling estimate of an empty buffer")
    terms = _is_terms(buffer.f, buffer.log_weights, gamma)
    mu = float(terms.mean())
    stderr = float(terms.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return EstimateResult(mu, n, weighted_ess(terms), stderr)


@dataclass
class SPAISConfig:
    n_particles: int = 500
    n_iter: int = 99
    beta: float = 1e-2
    lr: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @classmethod
    def from_budget(cls, budget, n_particles=500, **kw):
        """Pick n_iter so that n_particles * (n_iter + 1) == budget."""
        if budget < n_particles:
            raise ValueError(f"budget {budget} is smaller than one batch of {n_particles}")
        return cls(n_particles=n_particles, n_iter=budget // n_particles - 1, **kw)


@dataclass
class SPAISRun:
    result: EstimateResult
    proposal: object
    buffer: ISBuffer
    particles: ParticleSet
    last_proposals: object


def _refresh(particles, proposal, beta, gamma):
    """Re-evaluate log q of the held particles under the current proposal."""
    batch = particles.batch
    states, xs = batch.conditioning_pairs()
    batch = replace(batch, log_proposal=proposal.log_prob(states, xs).reshape(
        batch.log_proposal.shape))
    return ParticleSet(batch, smoothed_log_weight(batch, beta, gamma))


def run_spais(env, proposal, config, on_iteration=None):
    """Run the adaptive loop and return the estimate, the adapted proposal and the buffer.

    ``proposal`` is copied; the caller's instance is not modified. When given,
    ``on_iteration`` receives each per-iteration metrics dict.
    """
    q = proposal.copy()
    n, gamma, beta = config.n_particles, env.gamma, config.beta
    opt = Adam(q.size, lr=config.lr)

    batch = rollout_batch(env, q, seeding.rollout_seeds(config.seed, 0, n))
    buffer = ISBuffer()
    buffer.append(batch.f, batch.log_weights(), 0, batch.critical)
    particles = ParticleSet(batch, smoothed_log_weight(batch, beta, gamma))
    proposals = batch

    est = importance_sampling_estimate(buffer, gamma)
    history = [{"method": "spais", "iteration": 0, "n_samples_total": len(buffer),
                "mu_hat_so_far": est.mu_hat, "acceptance_rate": math.nan, "mean_loss": math.nan,
                "ess": est.ess, "mean_smoothed_log_weight": float(particles.log_weights.mean())}]
    if on_iteration is not None:
        on_iteration(history[0])
    for k in range(1, config.n_iter + 1):
        proposals = rollout_batch(env, q, seeding.rollout_seeds(config.seed, k, n))
        buffer.append(proposals.f, proposals.log_weights(), k, proposals.critical)
        incoming = ParticleSet(proposals, smoothed_log_weight(proposals, beta, gamma))
        particles = _refresh(particles, q, beta, gamma)
        particles, rate = update_particle_set(
            particles, incoming, seeding.mix_seed(config.seed, k, seeding.MH_STREAM))

        loss, grad = loss_and_gradient(q, particles.batch)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise FloatingPointError(f"non-finite loss at iteration {k}")
        opt.step(q.theta, grad)

        est = importance_sampling_estimate(buffer, gamma)
        row = {"method": "spais", "iteration": k, "n_samples_total": len(buffer),
               "mu_hat_so_far": est.mu_hat, "acceptance_rate": rate, "mean_loss": loss,
               "ess": est.ess, "mean_smoothed_log_weight": float(particles.log_weights.mean())}
        history.append(row)
        if on_iteration is not None:
            on_iteration(row)

    result = importance_sampling_estimate(buffer, gamma)
    result.per_iteration = history
    return SPAISRun(result, q, buffer, particles, proposals)
