"""Trajectories, proposal-driven rollouts and importance weights.

A rollout starts from the environment's initial state s_1 and for t = 1..T
draws x_t ~ q(. | s_t), records log d(x_t | s_t) and log q(x_t | s_t) at
sampling time, and steps to s_{t+1}. The evaluation f is the running maximum
of the environment's robustness over the states reached, s_2..s_{T+1}.

Because transitions, observations and the policy are deterministic functions
of (s_t, x_t) in every environment here, their density terms cancel in p/q and
the trajectory log weight is sum_t [log d(x_t|s_t) - log q(x_t|s_t)].
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .environments.base import gaussian_log_prob
from .imh import log_logistic_cdf


class NominalSampler:
    """Samples disturbances from the environment's own d(x | s)."""

    def __init__(self, env):
        self.env = env
        self.d_x = env.d_x

    def mean_std(self, states):
        return self.env.nominal_mean_std(states)


@dataclass(frozen=True)
class StepRecord:
    state: np.ndarray
    disturbance: np.ndarray
    log_nominal: float
    log_proposal: float


@dataclass(frozen=True)
class Trajectory:
    steps: tuple
    f_value: float
    seed: int
    final_state: np.ndarray

    def __len__(self):
        return len(self.steps)

    @property
    def states(self):
        return np.array([s.state for s in self.steps])

    @property
    def visited_states(self):
        """s_2..s_{T+1}: the states f is evaluated over."""
        return np.vstack([self.states[1:], self.final_state[None, :]])

    @property
    def disturbances(self):
        return np.array([s.disturbance for s in self.steps])


@dataclass
class TrajectoryBatch:
    """Structure-of-arrays store for n trajectories of horizon T.

    ``states`` is ``(n, T + 1, d_s)`` and holds s_1..s_{T+1}; ``critical`` is
    the visited state at which f was attained.
    """
    states: np.ndarray
    disturbances: np.ndarray
    log_nominal: np.ndarray
    log_proposal: np.ndarray
    f: np.ndarray
    critical: np.ndarray
    seeds: np.ndarray

    def __len__(self):
        return self.f.shape[0]

    @property
    def horizon(self):
        return self.disturbances.shape[1]

    def __getitem__(self, i):
        steps = tuple(
            StepRecord(self.states[i, t].copy(), self.disturbances[i, t].copy(),
                       float(self.log_nominal[i, t]), float(self.log_proposal[i, t]))
            for t in range(self.horizon))
        return Trajectory(steps, float(self.f[i]), int(self.seeds[i]),
                          self.states[i, -1].copy())

    def log_weights(self):
        return np.sum(self.log_nominal - self.log_proposal, axis=1)

    def conditioning_pairs(self):
        """(s_t, x_t) for every step, flattened to ``(n T, d_s)`` and ``(n T, d_x)``."""
        s = self.states[:, :-1]
        return (s.reshape(-1, s.shape[-1]),
                self.disturbances.reshape(-1, self.disturbances.shape[-1]))

    def where(self, mask, other):
        """Row-wise choice: ``other`` where mask is True, else self."""
        mask = np.asarray(mask, dtype=bool)

        def pick(a, b):
            m = mask.reshape((-1,) + (1,) * (a.ndim - 1))
            return np.where(m, b, a)
        return TrajectoryBatch(*(pick(getattr(self, k), getattr(other, k))
                                 for k in self.__dataclass_fields__))

    def take(self, idx):
        return TrajectoryBatch(*(getattr(self, k)[idx] for k in self.__dataclass_fields__))

    @classmethod
    def concatenate(cls, batches):
        return cls(*(np.concatenate([getattr(b, k) for b in batches])
                     for k in cls.__dataclass_fields__))


def standard_noise(seeds, horizon, d_x):
    """Per-rollout standard-normal noise, row j drawn from ``default_rng(seeds[j])``."""
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    eps = np.empty((seeds.shape[0], horizon, d_x))
    for j, s in enumerate(seeds):
        eps[j] = np.random.default_rng(int(s)).standard_normal((horizon, d_x))
    return eps


def rollout_batch(env, sampler, seeds, eps=None):
    """Roll out one trajectory per seed with x_t = mean(s_t) + std(s_t) eps_t.

    ``eps`` may be supplied directly (shape ``(n, T, d_x)``); otherwise it is
    drawn per rollout from its seed.
    """
    if sampler.d_x != env.d_x:
        raise ValueError(
            f"proposal disturbance dim {sampler.d_x} does not match {env.name} d_x={env.d_x}")
    seeds = np.atleast_1d(np.asarray(seeds, dtype=np.uint64))
    n, horizon = seeds.shape[0], env.horizon
    if eps is None:
        eps = standard_noise(seeds, horizon, env.d_x)
    states = np.empty((n, horizon + 1, env.d_s))
    xs = np.empty((n, horizon, env.d_x))
    log_d = np.empty((n, horizon))
    log_q = np.empty((n, horizon))
    f = np.full(n, -np.inf)
    critical = np.empty((n, env.d_s))
    s = env.initial_states(n)
    rows = np.arange(n)
    for t in range(horizon):
        states[:, t] = s
        mean, std = sampler.mean_std(s)
        x = mean + std * eps[:, t]
        xs[:, t] = x
        log_q[:, t] = gaussian_log_prob(x, mean, std)
        d_mean, d_std = env.nominal_mean_std(s)
        log_d[:, t] = gaussian_log_prob(x, d_mean, d_std)
        s = env.step(s, x, t)
        r = env.robustness(s)
        better = r > f
        f = np.where(better, r, f)
        critical[rows[better]] = s[better]
    states[:, horizon] = s
    return TrajectoryBatch(states, xs, log_d, log_q, f, critical, seeds)


def rollout(env, proposal, seed):
    """Single trajectory; bit-identical for identical (env, proposal, seed)."""
    return rollout_batch(env, proposal, [seed])[0]


def log_importance_weight(traj):
    """log w = sum_t log d(x_t|s_t) - log q(x_t|s_t); vectorised for batches."""
    if isinstance(traj, TrajectoryBatch):
        return traj.log_weights()
    return float(sum(s.log_nominal - s.log_proposal for s in traj.steps))


def smoothed_log_weight(traj, beta, gamma):
    """log w~ = log w + log P_beta(f - gamma); finite for every finite f."""
    f = traj.f if isinstance(traj, TrajectoryBatch) else traj.f_value
    return log_importance_weight(traj) + log_logistic_cdf(np.asarray(f) - gamma, beta)


def export_csv(batch, path_or_file, ids=None):
    """Write one row per timestep.

    Columns: trajectory_id, t, state_*, x_*, log_nominal, log_proposal, f_value.
    A terminal row ``t = T`` carries s_{T+1} with empty disturbance and density
    fields so that f can be recomputed from the file alone.
    """
    n, horizon = len(batch), batch.horizon
    d_s, d_x = batch.states.shape[-1], batch.disturbances.shape[-1]
    ids = range(n) if ids is None else ids
    header = (["trajectory_id", "t"] + [f"state_{k}" for k in range(d_s)]
              + [f"x_{k}" for k in range(d_x)] + ["log_nominal", "log_proposal", "f_value"])
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, tid in zip(range(n), ids):
            f = repr(float(batch.f[i]))
            for t in range(horizon):
                w.writerow([tid, t] + [repr(float(v)) for v in batch.states[i, t]]
                           + [repr(float(v)) for v in batch.disturbances[i, t]]
                           + [repr(float(batch.log_nominal[i, t])),
                              repr(float(batch.log_proposal[i, t])), f])
            w.writerow([tid, horizon] + [repr(float(v)) for v in batch.states[i, horizon]]
                       + [""] * d_x + ["", "", f])
    finally:
        if own:
            fh.close()
