"""Head-on aircraft encounter in the vertical plane with a threshold advisory logic.

Ownship flies +x at constant speed, intruder flies -x. The only disturbance is
the intruder's vertical rate (nominal rate plus noise each step). Once the
time to closest approach drops below ``tau_alert`` and the linearly predicted
vertical miss is under ``h_alert``, the ownship latches a climb (intruder
predicted at or below) or descend advisory and slews its vertical rate toward
``+-adv_rate`` with bounded vertical acceleration.

State layout (d_s = 7): ``(x_own, z_own, vz_own, x_int, z_int, vz_int, sense)``.
``f = -min_t (|dz| / z_scale + |dx| / x_scale)`` and gamma = -collision_size.
"""
import numpy as np

from .._accel import njit, prange
from .base import Environment


@njit(cache=True)
def _encounter_advance(x_o, z_o, vz_o, x_i, z_i, vz_i, sense, dist, prm):
    dt, v_own, v_int, tau_alert, h_alert, adv_rate, vacc, vz_nom = (
        prm[0], prm[1], prm[2], prm[3], prm[4], prm[5], prm[6], prm[7])
    dx = x_i - x_o
    if sense == 0.0 and dx > 0.0:
        tau = dx / (v_own + v_int)
        if tau <= tau_alert:
            dz_pred = (z_i + vz_i * tau) - (z_o + vz_o * tau)
            if abs(dz_pred) < h_alert:
                sense = 1.0 if dz_pred <= 0.0 else -1.0
    target = sense * adv_rate
    dv = target - vz_o
    lim = vacc * dt
    if dv > lim:
        dv = lim
    elif dv < -lim:
        dv = -lim
    vz_o = vz_o + dv
    vz_i = vz_nom + dist
    return (x_o + dt * v_own, z_o + dt * vz_o, vz_o, x_i - dt * v_int, z_i + dt * vz_i,
            vz_i, sense)


@njit(cache=True)
def _encounter_step_kernel(s, x, out, prm):
    for i in range(s.shape[0]):
        r = _encounter_advance(s[i, 0], s[i, 1], s[i, 2], s[i, 3], s[i, 4], s[i, 5],
                               s[i, 6], x[i, 0], prm)
        for k in range(7):
            out[i, k] = r[k]


@njit(cache=True, parallel=True)
def _encounter_simulate_kernel(eps, s_init, mu, sigma, prm, z_scale, x_scale):
    n, horizon = eps.shape[0], eps.shape[1]
    f = np.empty(n)
    for i in prange(n):
        x_o, z_o, vz_o, x_i, z_i, vz_i, sense = (s_init[0], s_init[1], s_init[2], s_init[3],
                                                 s_init[4], s_init[5], s_init[6])
        fmax = -np.inf
        for t in range(horizon):
            x_o, z_o, vz_o, x_i, z_i, vz_i, sense = _encounter_advance(
                x_o, z_o, vz_o, x_i, z_i, vz_i, sense, mu + sigma * eps[i, t, 0], prm)
            r = -(abs(z_i - z_o) / z_scale + abs(x_i - x_o) / x_scale)
            if r > fmax:
                fmax = r
        f[i] = fmax
    return f


class CollisionAvoidance(Environment):
    name = "collision"
    d_s = 7
    d_x = 1

    _prm_keys = ("dt", "v_own", "v_int", "tau_alert", "h_alert", "adv_rate", "vz_accel",
                 "vz_int_nominal")

    def _setup(self):
        p = self.params
        self._prm = np.array([float(p[k]) for k in self._prm_keys])
        if p["sigma_vz"] <= 0:
            raise ValueError("sigma_vz must be positive")

    def _initial_state(self):
        p = self.params
        return [0.0, p["z_own0"], 0.0, p["x_int0"], p["z_int0"], p["vz_int_nominal"], 0.0]

    def _nominal_moments(self):
        return np.array([0.0]), np.array([self.params["sigma_vz"]])

    def _step_numpy(self, s, x):
        dt, v_own, v_int, tau_alert, h_alert, adv_rate, vacc, vz_nom = self._prm
        x_o, z_o, vz_o, x_i, z_i, vz_i, sense = s.T
        dx = x_i - x_o
        tau = np.where(dx > 0, dx, 0.0) / (v_own + v_int)
        dz_pred = (z_i + vz_i * tau) - (z_o + vz_o * tau)
        alert = (sense == 0.0) & (dx > 0) & (tau <= tau_alert) & (np.abs(dz_pred) < h_alert)
        sense = np.where(alert, np.where(dz_pred <= 0.0, 1.0, -1.0), sense)
        vz_o = vz_o + np.clip(sense * adv_rate - vz_o, -vacc * dt, vacc * dt)
        vz_i = vz_nom + x[:, 0]
        return np.column_stack([x_o + dt * v_own, z_o + dt * vz_o, vz_o, x_i - dt * v_int,
                                z_i + dt * vz_i, vz_i, sense])

    def _step_numba(self, s, x, out):
        _encounter_step_kernel(s, x, out, self._prm)

    def _simulate_numba(self, eps):
        p = self.params
        return _encounter_simulate_kernel(eps, self.initial_state(), 0.0, float(p["sigma_vz"]),
                                          self._prm, float(p["z_scale"]), float(p["x_scale"]))

    def robustness(self, states):
        s = np.atleast_2d(states)
        p = self.params
        return -(np.abs(s[:, 4] - s[:, 1]) / p["z_scale"] + np.abs(s[:, 3] - s[:, 0]) / p["x_scale"])
