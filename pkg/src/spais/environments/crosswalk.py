"""Autonomous vehicle approaching a pedestrian at a crosswalk.

The road runs along +x with the AV on the lane centre line y = 0. The AV uses
the Intelligent Driver Model for longitudinal control and treats the
pedestrian as a stationary-in-y obstacle whenever the *perceived* pedestrian
is inside the lane band ahead of it. The pedestrian is a double integrator
that relaxes toward a nominal crossing velocity and is pushed by a disturbed
acceleration.

State layout (d_s = 6): ``(av_x, av_v, ped_x, ped_y, ped_vx, ped_vy)``.
Disturbance layout (d_x = 5): ``(ped_ax, ped_ay, noise_px, noise_py, noise_v)``;
perception noise is additive. ``f = -min_t distance(AV, pedestrian)``.
"""
import numpy as np

from .._accel import njit, prange
from .base import Environment


@njit(cache=True)
def idm_acceleration(v, gap, lead_v, has_lead, v0, headway, a_max, b_comf, s0, delta):
    """IDM acceleration; ``gap`` is clamped to 0.1 m to keep s*/gap finite."""
    free = 1.0 - (v / v0) ** delta
    if not has_lead:
        return a_max * free
    if gap < 0.1:
        gap = 0.1
    s_star = s0 + v * headway + v * (v - lead_v) / (2.0 * np.sqrt(a_max * b_comf))
    if s_star < s0:
        s_star = s0
    return a_max * (free - (s_star / gap) ** 2)


@njit(cache=True)
def _crosswalk_advance(av_x, av_v, px, py, vx, vy, x0, x1, x2, x3, x4, prm):
    dt, v0, headway, a_max, b_comf, s0, delta, b_max, band, k_ped, vx_des, vy_des = (
        prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6], prm[7], prm[8], prm[9],
        prm[10], prm[11])
    seen_x = px + x2
    seen_y = py + x3
    has_lead = abs(seen_y) < band and seen_x > av_x
    acc = idm_acceleration(av_v, seen_x - av_x, vx + x4, has_lead, v0, headway, a_max,
                           b_comf, s0, delta)
    if acc < -b_max:
        acc = -b_max
    av_v_new = av_v + dt * acc
    if av_v_new < 0.0:
        av_v_new = 0.0
    av_x_new = av_x + dt * av_v_new
    vx_new = vx + dt * (k_ped * (vx_des - vx) + x0)
    vy_new = vy + dt * (k_ped * (vy_des - vy) + x1)
    return av_x_new, av_v_new, px + dt * vx_new, py + dt * vy_new, vx_new, vy_new


@njit(cache=True)
def _crosswalk_step_kernel(s, x, out, prm):
    for i in range(s.shape[0]):
        r = _crosswalk_advance(s[i, 0], s[i, 1], s[i, 2], s[i, 3], s[i, 4], s[i, 5],
                               x[i, 0], x[i, 1], x[i, 2], x[i, 3], x[i, 4], prm)
        for k in range(6):
            out[i, k] = r[k]


@njit(cache=True, parallel=True)
def _crosswalk_simulate_kernel(eps, s_init, mu, sigma, prm):
    n, horizon = eps.shape[0], eps.shape[1]
    f = np.empty(n)
    for i in prange(n):
        av_x, av_v, px, py, vx, vy = (s_init[0], s_init[1], s_init[2], s_init[3],
                                      s_init[4], s_init[5])
        fmax = -np.inf
        for t in range(horizon):
            av_x, av_v, px, py, vx, vy = _crosswalk_advance(
                av_x, av_v, px, py, vx, vy,
                mu[0] + sigma[0] * eps[i, t, 0], mu[1] + sigma[1] * eps[i, t, 1],
                mu[2] + sigma[2] * eps[i, t, 2], mu[3] + sigma[3] * eps[i, t, 3],
                mu[4] + sigma[4] * eps[i, t, 4], prm)
            r = -np.sqrt((px - av_x) ** 2 + py * py)
            if r > fmax:
                fmax = r
        f[i] = fmax
    return f


class Crosswalk(Environment):
    name = "crosswalk"
    d_s = 6
    d_x = 5

    _prm_keys = ("dt", "v0", "headway", "a_max", "b_comf", "s0", "delta", "b_max",
                 "lane_band", "ped_gain", "ped_vx_des", "ped_vy_des")

    def _setup(self):
        p = self.params
        self._prm = np.array([float(p[k]) for k in self._prm_keys])
        self._mu = np.zeros(5)
        self._sigma = np.array([p["sigma_ped_acc"], p["sigma_ped_acc"], p["sigma_pos"],
                                p["sigma_pos"], p["sigma_speed"]], dtype=float)
        if np.any(self._sigma <= 0):
            raise ValueError("crosswalk noise scales must be positive")

    def _initial_state(self):
        p = self.params
        return [p["av_x0"], p["av_v0"], p["ped_x0"], p["ped_y0"], p["ped_vx0"], p["ped_vy0"]]

    def _nominal_moments(self):
        return self._mu, self._sigma

    def idm(self, v, gap, lead_v, has_lead):
        """Vectorised IDM acceleration before the braking limit is applied."""
        dt, v0, headway, a_max, b_comf, s0, delta = self._prm[:7]
        free = 1.0 - (v / v0) ** delta
        gap = np.maximum(gap, 0.1)
        s_star = np.maximum(s0 + v * headway + v * (v - lead_v) / (2.0 * np.sqrt(a_max * b_comf)), s0)
        return np.where(has_lead, a_max * (free - (s_star / gap) ** 2), a_max * free)

    def _step_numpy(self, s, x):
        dt, b_max, band, k_ped, vx_des, vy_des = (self._prm[0], *self._prm[7:])
        av_x, av_v, px, py, vx, vy = s.T
        seen_x = px + x[:, 2]
        seen_y = py + x[:, 3]
        has_lead = (np.abs(seen_y) < band) & (seen_x > av_x)
        acc = np.maximum(self.idm(av_v, seen_x - av_x, vx + x[:, 4], has_lead), -b_max)
        av_v_new = np.maximum(av_v + dt * acc, 0.0)
        vx_new = vx + dt * (k_ped * (vx_des - vx) + x[:, 0])
        vy_new = vy + dt * (k_ped * (vy_des - vy) + x[:, 1])
        return np.column_stack([av_x + dt * av_v_new, av_v_new, px + dt * vx_new,
                                py + dt * vy_new, vx_new, vy_new])

    def _step_numba(self, s, x, out):
        _crosswalk_step_kernel(s, x, out, self._prm)

    def _simulate_numba(self, eps):
        return _crosswalk_simulate_kernel(eps, self.initial_state(), self._mu, self._sigma,
                                          self._prm)

    def robustness(self, states):
        s = np.atleast_2d(states)
        return -np.hypot(s[:, 2] - s[:, 0], s[:, 3])
