"""Inverted pendulum under a saturated PD controller with additive torque noise.

State is ``(theta, omega)``; theta = 0 is upright. Failure is |theta| >= gamma
(pi/4 by default) at any visited state. The controller torque saturates at
``u_max`` which is smaller than the gravity torque beyond roughly 0.3 rad, so a
push past that angle cannot be recovered and the pole falls left or right.
"""
import numpy as np

from .._accel import njit, prange
from .base import Environment


@njit(cache=True)
def _pendulum_step_kernel(s, x, out, dt, g, m, l, kp, kd, u_max):
    for i in range(s.shape[0]):
        theta = s[i, 0]
        omega = s[i, 1]
        u = -kp * theta - kd * omega
        if u > u_max:
            u = u_max
        elif u < -u_max:
            u = -u_max
        omega = omega + dt * (g / l * np.sin(theta) + (u + x[i, 0]) / (m * l * l))
        out[i, 0] = theta + dt * omega
        out[i, 1] = omega


@njit(cache=True, parallel=True)
def _pendulum_simulate_kernel(eps, theta0, omega0, dt, g, m, l, kp, kd, u_max, mu_x, sigma_x):
    n, horizon = eps.shape[0], eps.shape[1]
    f = np.empty(n)
    for i in prange(n):
        theta = theta0
        omega = omega0
        fmax = -np.inf
        for t in range(horizon):
            u = -kp * theta - kd * omega
            if u > u_max:
                u = u_max
            elif u < -u_max:
                u = -u_max
            x = mu_x + sigma_x * eps[i, t, 0]
            omega = omega + dt * (g / l * np.sin(theta) + (u + x) / (m * l * l))
            theta = theta + dt * omega
            a = abs(theta)
            if a > fmax:
                fmax = a
        f[i] = fmax
    return f


class Pendulum(Environment):
    name = "pendulum"
    d_s = 2
    d_x = 1

    def _setup(self):
        p = self.params
        self._dyn = (float(p["dt"]), float(p["g"]), float(p["m"]), float(p["l"]),
                     float(p["kp"]), float(p["kd"]), float(p["u_max"]))
        if p["sigma_x"] <= 0:
            raise ValueError("sigma_x must be positive")

    def _initial_state(self):
        return [self.params["theta0"], self.params["omega0"]]

    def _nominal_moments(self):
        return np.array([self.params["mu_x"]]), np.array([self.params["sigma_x"]])

    def control(self, s):
        _, _, _, _, kp, kd, u_max = self._dyn
        return np.clip(-kp * s[:, 0] - kd * s[:, 1], -u_max, u_max)

    def _step_numpy(self, s, x):
        dt, g, m, l, _, _, _ = self._dyn
        u = self.control(s)
        omega = s[:, 1] + dt * (g / l * np.sin(s[:, 0]) + (u + x[:, 0]) / (m * l * l))
        return np.column_stack([s[:, 0] + dt * omega, omega])

    def _step_numba(self, s, x, out):
        _pendulum_step_kernel(s, x, out, *self._dyn)

    def _simulate_numba(self, eps):
        p = self.params
        return _pendulum_simulate_kernel(eps, float(p["theta0"]), float(p["omega0"]), *self._dyn,
                                         float(p["mu_x"]), float(p["sigma_x"]))

    def robustness(self, states):
        return np.abs(np.atleast_2d(states)[:, 0])
