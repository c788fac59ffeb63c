"""Common machinery for the simulated systems under test."""
from __future__ import annotations

import hashlib
import json
from importlib import resources

import numpy as np

from .._accel import use_numba

LOG_2PI = float(np.log(2.0 * np.pi))


class DynamicsError(RuntimeError):
    """Raised when a simulation step produces a non-finite state."""


class ConfigError(ValueError):
    """Raised for malformed environment or method configuration."""


def load_default_params():
    """Default parameter blocks for every environment, keyed by name."""
    text = resources.files("spais.data").joinpath("environments.json").read_text()
    return json.loads(text)


def gaussian_log_prob(x, mean, std):
    """Diagonal Gaussian log density, summed over the last axis."""
    z = (x - mean) / std
    return -0.5 * np.sum(z * z + LOG_2PI + 2.0 * np.log(std), axis=-1)


class Environment:
    """A disturbance-driven sequential system.

    Subclasses provide the batched dynamics (``_step_numpy`` and optionally a
    numba kernel), a per-step robustness metric whose running maximum over the
    visited states is the evaluation ``f``, and the nominal disturbance model.

    All parameters come from a parameter block; defaults are read from
    ``spais/data/environments.json`` and may be overridden per instance.
    """

    name = "base"
    d_s = 0
    d_x = 0

    def __init__(self, **overrides):
        defaults = load_default_params()[self.name]
        unknown = set(overrides) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown parameter(s) for {self.name!r}: {sorted(unknown)}")
        params = dict(defaults)
        params.update(overrides)
        self.params = params
        self.horizon = int(params["horizon"])
        self.gamma = float(params["gamma"])
        self._setup()

    def _setup(self):
        pass

    # -- identity ---------------------------------------------------------
    def param_hash(self):
        """sha256 of the canonical parameter block (ground-truth cache key)."""
        blob = json.dumps({"env": self.name, "params": self.params}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def __repr__(self):
        return f"{type(self).__name__}({self.params})"

    # -- initial state ------------------------------------------------------
    def initial_state(self, seed=None):
        """Deterministic start; ``seed`` is accepted for interface symmetry."""
        return np.array(self._initial_state(), dtype=float)

    def initial_states(self, n):
        return np.tile(self.initial_state(), (n, 1))

    def _initial_state(self):
        raise NotImplementedError

    # -- dynamics ---------------------------------------------------------
    def step(self, states, disturbances, t=0):
        """Advance a state (``(d_s,)``) or batch (``(n, d_s)``) by one step."""
        states = np.asarray(states, dtype=float)
        disturbances = np.asarray(disturbances, dtype=float)
        single = states.ndim == 1
        s = np.atleast_2d(states)
        x = np.atleast_2d(disturbances)
        if s.shape[1] != self.d_s or x.shape[1] != self.d_x:
            raise ValueError(
                f"{self.name}: expected state dim {self.d_s} and disturbance dim "
                f"{self.d_x}, got {s.shape[1]} and {x.shape[1]}")
        if use_numba() and hasattr(self, "_step_numba"):
            out = np.empty_like(s)
            self._step_numba(np.ascontiguousarray(s), np.ascontiguousarray(x), out)
        else:
            out = self._step_numpy(s, x)
        if not np.all(np.isfinite(out)):
            bad = np.flatnonzero(~np.all(np.isfinite(out), axis=1))
            raise DynamicsError(
                f"{self.name}: non-finite state at t={t} for batch rows {bad[:5].tolist()}")
        return out[0] if single else out

    def _step_numpy(self, s, x):
        raise NotImplementedError

    # -- evaluation -------------------------------------------------------
    def robustness(self, states):
        """Per-state closeness to failure; larger is closer."""
        raise NotImplementedError

    def evaluate(self, states):
        """f over a visited state sequence ``(T, d_s)`` or a batch ``(n, T, d_s)``."""
        states = np.asarray(states, dtype=float)
        r = self.robustness(states.reshape(-1, self.d_s)).reshape(states.shape[:-1])
        return r.max(axis=-1)

    def is_failure(self, f):
        return np.asarray(f) >= self.gamma

    # -- nominal disturbance model ----------------------------------------
    def nominal_mean_std(self, states):
        """Mean and std of d(x | s) for a batch of states, each ``(n, d_x)``."""
        states = np.atleast_2d(states)
        n = states.shape[0]
        mean, std = self._nominal_moments()
        return np.broadcast_to(mean, (n, self.d_x)), np.broadcast_to(std, (n, self.d_x))

    def _nominal_moments(self):
        raise NotImplementedError

    def nominal_log_prob(self, state, disturbance):
        mean, std = self.nominal_mean_std(state)
        x = np.atleast_2d(disturbance)
        lp = gaussian_log_prob(x, mean, std)
        return float(lp[0]) if np.ndim(disturbance) <= 1 else lp

    def nominal_sample(self, state, seed):
        mean, std = self.nominal_mean_std(state)
        rng = np.random.default_rng(seed)
        x = mean + std * rng.standard_normal(mean.shape)
        return x[0] if np.ndim(state) <= 1 else x

    # -- fused nominal simulation (Monte Carlo hot path) ------------------
    def simulate_nominal(self, eps):
        """f for nominal rollouts driven by standard-normal noise ``(n, T, d_x)``."""
        eps = np.ascontiguousarray(eps, dtype=float)
        if eps.ndim != 3 or eps.shape[1] != self.horizon or eps.shape[2] != self.d_x:
            raise ValueError(f"{self.name}: noise must have shape (n, {self.horizon}, {self.d_x})")
        if use_numba() and hasattr(self, "_simulate_numba"):
            return self._simulate_numba(eps)
        return self._simulate_numpy(eps)

    def _simulate_numpy(self, eps):
        n = eps.shape[0]
        s = self.initial_states(n)
        fmax = np.full(n, -np.inf)
        for t in range(self.horizon):
            mean, std = self.nominal_mean_std(s)
            s = self._step_numpy(s, mean + std * eps[:, t])
            np.maximum(fmax, self.robustness(s), out=fmax)
        return fmax
