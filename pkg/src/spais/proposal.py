"""State-conditioned diagonal Gaussian proposal q(x | s).

Two tanh MLPs ``d_s -> 64 -> 32 -> d_x`` map the normalised state
``(s - state_mean) / state_std`` to the mean and to the raw log-std; the
effective log-std is floored per channel at ``logstd_floor``. All weights live
in one flat vector ``theta`` so the optimiser and finite-difference checks see
a single array; the per-layer matrices are views into it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import seeding
from .environments.base import LOG_2PI, gaussian_log_prob
from .traj import NominalSampler, rollout_batch

HIDDEN = (64, 32)


class PretrainError(RuntimeError):
    """Pretraining did not bring q close enough to the nominal distribution."""


def _layer_shapes(d_in, d_out, hidden):
    sizes = (d_in,) + tuple(hidden) + (d_out,)
    return [((a, b), (b,)) for a, b in zip(sizes[:-1], sizes[1:])]


def mlp_param_count(d_in, d_out, hidden=HIDDEN):
    return sum(w[0] * w[1] + b[0] for w, b in _layer_shapes(d_in, d_out, hidden))


def _mlp_forward(layers, h):
    acts = [h]
    for W, b in layers[:-1]:
        h = np.tanh(h @ W + b)
        acts.append(h)
    W, b = layers[-1]
    return h @ W + b, acts


def _mlp_backward(layers, grads, acts, dout):
    delta = dout
    for k in range(len(layers) - 1, -1, -1):
        gW, gb = grads[k]
        gW[...] = acts[k].T @ delta
        gb[...] = delta.sum(axis=0)
        if k:
            delta = (delta @ layers[k][0].T) * (1.0 - acts[k] ** 2)


class GaussianProposal:
    """q(x | s) = N(mean_net(s_hat), diag(exp(2 max(logstd_net(s_hat), floor))))."""

    def __init__(self, d_s, d_x, hidden=HIDDEN, state_mean=None, state_std=None,
                 logstd_floor=None, theta=None, seed=0):
        self.d_s, self.d_x, self.hidden = int(d_s), int(d_x), tuple(hidden)
        self.state_mean = np.zeros(d_s) if state_mean is None else np.array(state_mean, float)
        self.state_std = np.ones(d_s) if state_std is None else np.array(state_std, float)
        floor = -np.inf if logstd_floor is None else logstd_floor
        self.logstd_floor = np.broadcast_to(np.asarray(floor, float), (d_x,)).copy()
        if np.any(self.state_std <= 0):
            raise ValueError("state_std must be strictly positive")
        self._shapes = _layer_shapes(d_s, d_x, self.hidden) * 2
        self.size = sum(int(np.prod(w)) + b[0] for w, b in self._shapes)
        if theta is None:
            theta = self._init_theta(np.random.default_rng(seed))
        self.theta = np.array(theta, dtype=float)
        if self.theta.shape != (self.size,):
            raise ValueError(f"theta has {self.theta.size} entries, expected {self.size}")
        self.mean_layers, self.logstd_layers = self._split(self.theta)

    # -- parameter layout -------------------------------------------------
    def _split(self, flat):
        views, off = [], 0
        for wshape, bshape in self._shapes:
            nw = wshape[0] * wshape[1]
            views.append((flat[off:off + nw].reshape(wshape), flat[off + nw:off + nw + bshape[0]]))
            off += nw + bshape[0]
        half = len(views) // 2
        return views[:half], views[half:]

    def _init_theta(self, rng):
        parts = []
        for wshape, bshape in self._shapes:
            limit = np.sqrt(6.0 / (wshape[0] + wshape[1]))
            parts.append(rng.uniform(-limit, limit, wshape).ravel())
            parts.append(np.zeros(bshape))
        return np.concatenate(parts)

    def copy(self):
        return GaussianProposal(self.d_s, self.d_x, self.hidden, self.state_mean, self.state_std,
                                self.logstd_floor, self.theta.copy())

    def with_theta(self, theta):
        return GaussianProposal(self.d_s, self.d_x, self.hidden, self.state_mean, self.state_std,
                                self.logstd_floor, theta)

    # -- density ------------------------------------------------------------
    def normalize(self, states):
        return (np.atleast_2d(states) - self.state_mean) / self.state_std

    def _forward(self, states):
        z = self.normalize(states)
        mean, mean_acts = _mlp_forward(self.mean_layers, z)
        raw, ls_acts = _mlp_forward(self.logstd_layers, z)
        return mean, raw, mean_acts, ls_acts

    def mean_std(self, states):
        mean, raw, _, _ = self._forward(states)
        return mean, np.exp(np.maximum(raw, self.logstd_floor))

    def log_prob(self, states, disturbances):
        mean, std = self.mean_std(states)
        lp = gaussian_log_prob(np.atleast_2d(disturbances), mean, std)
        return float(lp[0]) if np.ndim(states) == 1 else lp

    def sample(self, state, seed):
        """Reparameterised draw mean + std * eps with eps from ``default_rng(seed)``."""
        mean, std = self.mean_std(state)
        eps = np.random.default_rng(seed).standard_normal(mean.shape)
        x = mean + std * eps
        return x[0] if np.ndim(state) == 1 else x

    # -- objective ------------------------------------------------------------
    def nll_and_grad(self, states, disturbances, scale=1.0):
        """``scale * sum -log q(x | s)`` over the pairs and its gradient w.r.t. theta."""
        mean, raw, mean_acts, ls_acts = self._forward(states)
        floored = raw <= self.logstd_floor
        logstd = np.where(floored, self.logstd_floor, raw)
        std = np.exp(logstd)
        r = (np.atleast_2d(disturbances) - mean) / std
        loss = scale * float(np.sum(0.5 * LOG_2PI + logstd + 0.5 * r * r))
        d_mean = -scale * r / std
        d_raw = np.where(floored, 0.0, scale * (1.0 - r * r))
        grad = np.zeros_like(self.theta)
        g_mean, g_ls = self._split(grad)
        _mlp_backward(self.mean_layers, g_mean, mean_acts, d_mean)
        _mlp_backward(self.logstd_layers, g_ls, ls_acts, d_raw)
        return loss, grad

    # -- persistence ----------------------------------------------------------
    def to_dict(self):
        def net(layers):
            return [{"W": W.tolist(), "b": b.tolist()} for W, b in layers]
        return {
            "format": "spais-gaussian-mlp",
            "version": 1,
            "d_s": self.d_s,
            "d_x": self.d_x,
            "hidden": list(self.hidden),
            "activation": "tanh",
            "layer_shapes": [[list(w), list(b)] for w, b in self._shapes[: len(self._shapes) // 2]],
            "state_mean": self.state_mean.tolist(),
            "state_std": self.state_std.tolist(),
            "logstd_floor": self.logstd_floor.tolist(),
            "mean_net": net(self.mean_layers),
            "logstd_net": net(self.logstd_layers),
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != "spais-gaussian-mlp":
            raise ValueError("not a spais proposal checkpoint")
        parts = []
        for layer in data["mean_net"] + data["logstd_net"]:
            parts.append(np.asarray(layer["W"], float).ravel())
            parts.append(np.asarray(layer["b"], float))
        return cls(data["d_s"], data["d_x"], data["hidden"], data["state_mean"],
                   data["state_std"], data["logstd_floor"], np.concatenate(parts))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def loss_and_gradient(proposal, batch):
    """Cross-entropy loss (1/N) sum_n sum_t -log q(x_tn | s_tn) and its gradient."""
    n = len(batch)
    if n < 1:
        raise ValueError("need at least one trajectory")
    states, xs = batch.conditioning_pairs()
    return proposal.nll_and_grad(states, xs, scale=1.0 / n)


@dataclass
class Adam:
    """Adam state for a flat parameter vector."""
    size: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.m = np.zeros(self.size)
        self.v = np.zeros(self.size)
        self.t = 0

    def step(self, theta, grad):
        """Update ``theta`` in place and return it."""
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return theta


def adam_step(proposal, grad, opt, lr=None):
    if lr is not None:
        opt.lr = lr
    opt.step(proposal.theta, grad)
    return proposal


def gaussian_kl(mean_p, std_p, mean_q, std_q):
    """KL(N_p || N_q) for diagonal Gaussians, summed over the last axis."""
    return np.sum(np.log(std_q / std_p) + (std_p ** 2 + (mean_p - mean_q) ** 2)
                  / (2.0 * std_q ** 2) - 0.5, axis=-1)


def pretrain_to_nominal(proposal, env, n_rollouts=200, n_epochs=500, seed=0, lr=1e-2,
                        kl_tol=1e-2, floor_fraction=0.1):
    """Fit q to d(x | s) by maximum likelihood on nominal rollouts.

    Normalisation statistics come from the states visited by ``n_rollouts``
    nominal rollouts and are frozen afterwards. Each epoch redraws x ~ d(.|s)
    at the training states and takes one full-batch Adam step. The held-out
    check uses fresh nominal rollouts and the closed-form per-step KL(d || q),
    which is the expected excess NLL of q over the nominal entropy; exceeding
    ``kl_tol`` raises :class:`PretrainError`.
    """
    if n_rollouts < 1:
        raise ValueError("pretraining needs at least one nominal rollout")
    nominal = NominalSampler(env)
    train = rollout_batch(env, nominal, seeding.rollout_seeds(
        seeding.mix_seed(seed, seeding.PRETRAIN_STREAM), 0, n_rollouts))
    states, _ = train.conditioning_pairs()
    s_mean = states.mean(axis=0)
    s_std = states.std(axis=0)
    s_std = np.where(s_std > 1e-8, s_std, 1.0)
    d_mean, d_std = env.nominal_mean_std(states)

    q = GaussianProposal(env.d_s, env.d_x, proposal.hidden, s_mean, s_std,
                         np.log(floor_fraction * d_std.mean(axis=0)), proposal.theta.copy())
    # start the output layers at the average nominal moments
    for layers, target in ((q.mean_layers, d_mean.mean(axis=0)),
                           (q.logstd_layers, np.log(d_std).mean(axis=0))):
        W, b = layers[-1]
        W *= 0.1
        b[...] = target

    rng = seeding.rng(seed, seeding.PRETRAIN_STREAM, 1)
    opt = Adam(q.size, lr=lr)
    for _ in range(n_epochs):
        xs = d_mean + d_std * rng.standard_normal(d_mean.shape)
        _, grad = q.nll_and_grad(states, xs, scale=1.0 / states.shape[0])
        opt.step(q.theta, grad)

    held = rollout_batch(env, nominal, seeding.rollout_seeds(
        seeding.mix_seed(seed, seeding.HOLDOUT_STREAM), 0, n_rollouts))
    h_states, _ = held.conditioning_pairs()
    hm, hs = env.nominal_mean_std(h_states)
    qm, qs = q.mean_std(h_states)
    kl = float(np.mean(gaussian_kl(hm, hs, qm, qs)))
    q.pretrain_kl = kl
    if not kl <= kl_tol:
        raise PretrainError(f"held-out KL(d||q) per step {kl:.3g} exceeds tolerance {kl_tol:.3g}")
    return q
