"""One-step Gaussian problem with a closed-form failure probability.

The single disturbance x ~ N(0, 1) becomes the next state and f = x, so with
gamma = 2 the failure probability is the standard normal tail 1 - Phi(2).
"""
import math

import numpy as np

from .base import Environment


class ToyGaussian(Environment):
    name = "toy"
    d_s = 1
    d_x = 1

    def _initial_state(self):
        return [0.0]

    def _nominal_moments(self):
        return np.array([self.params["mean"]]), np.array([self.params["std"]])

    def _step_numpy(self, s, x):
        return x.copy()

    def _simulate_numpy(self, eps):
        return self.params["mean"] + self.params["std"] * eps[:, 0, 0]

    def robustness(self, states):
        return np.atleast_2d(states)[:, 0]

    def exact_failure_probability(self):
        z = (self.gamma - self.params["mean"]) / self.params["std"]
        return 0.5 * math.erfc(z / math.sqrt(2.0))
