"""Logistic relaxation of the failure indicator and the independent MH kernel.

The hard failure target p(tau) 1{f >= gamma} is replaced by
p(tau) P_beta(f - gamma), where P_beta is the logistic CDF with scale beta.
Particles are trajectories carrying their log w~ = log p - log q + log P_beta.
The kernel proposes from q independently of the current particle, so the
acceptance ratio is simply w~(proposed) / w~(current).
"""
from dataclasses import dataclass

import numpy as np


def _check_beta(beta):
    if not beta > 0:
        raise ValueError(f"logistic scale beta must be positive, got {beta!r}")


def logistic_cdf(z, beta):
    """P_beta(z) = 1 / (1 + exp(-z / beta)); exact limits 0 and 1 at -inf/+inf."""
    _check_beta(beta)
    z = np.asarray(z, dtype=float)
    # exp of the log form keeps relative accuracy deep in the lower tail
    out = np.exp(-np.logaddexp(0.0, -z / beta))
    return float(out) if out.ndim == 0 else out


def log_logistic_cdf(z, beta):
    """log P_beta(z) = -log(1 + exp(-z / beta)), finite for every finite z."""
    _check_beta(beta)
    z = np.asarray(z, dtype=float)
    out = -np.logaddexp(0.0, -z / beta)
    return float(out) if out.ndim == 0 else out


def acceptance_probability(current_log_weight, proposed_log_weight):
    """min(1, w'/w) evaluated in log space."""
    delta = np.asarray(proposed_log_weight, dtype=float) - current_log_weight
    out = np.exp(np.minimum(delta, 0.0))
    return float(out) if out.ndim == 0 else out


def accept_mask(current_log_weights, proposed_log_weights, uniforms):
    """Accept where log u < log w'~ - log w~ (u in [0, 1), so u = 0 always accepts)."""
    with np.errstate(divide="ignore"):
        log_u = np.log(uniforms)
    return log_u < (np.asarray(proposed_log_weights) - np.asarray(current_log_weights))


@dataclass
class Particle:
    trajectory: object
    smoothed_log_weight: float


@dataclass
class ParticleSet:
    """N trajectories (a :class:`~spais.traj.TrajectoryBatch`) with cached log w~."""
    batch: object
    log_weights: np.ndarray

    def __len__(self):
        return len(self.log_weights)

    def __getitem__(self, i):
        return Particle(self.batch[i], float(self.log_weights[i]))


def mh_accept(current, proposed, seed):
    """One IMH decision between two particles using a single uniform from ``seed``.

    Returns ``(particle, accepted)``; on rejection the current particle is
    returned unchanged.
    """
    u = np.random.default_rng(seed).random()
    ok = bool(accept_mask(current.smoothed_log_weight, proposed.smoothed_log_weight, u))
    return (proposed if ok else current), ok


def update_particle_set(particles, proposals, seed):
    """Pairwise IMH step: particle n competes only with proposal n.

    ``seed`` keys one uniform stream; element n is the uniform of pair n.
    Returns the updated set and the fraction of accepted proposals.
    """
    n = len(particles)
    if len(proposals) != n:
        raise ValueError(f"particle/proposal size mismatch: {n} vs {len(proposals)}")
    uniforms = np.random.default_rng(seed).random(n)
    mask = accept_mask(particles.log_weights, proposals.log_weights, uniforms)
    batch = particles.batch.where(mask, proposals.batch)
    log_w = np.where(mask, proposals.log_weights, particles.log_weights)
    return ParticleSet(batch, log_w), float(mask.mean())
