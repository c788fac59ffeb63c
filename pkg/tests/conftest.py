import os

import numpy as np
import pytest

from spais.environments import make_env
from spais.proposal import GaussianProposal, pretrain_to_nominal

DATA = os.path.join(os.path.dirname(__file__), "data")


@pytest.fixture
def toy():
    return make_env("toy")


@pytest.fixture
def pendulum():
    return make_env("pendulum")


@pytest.fixture(scope="session")
def toy_q():
    env = make_env("toy")
    return pretrain_to_nominal(GaussianProposal(env.d_s, env.d_x), env, 200, 300, seed=0)


@pytest.fixture(scope="session")
def pendulum_q():
    env = make_env("pendulum")
    return pretrain_to_nominal(GaussianProposal(env.d_s, env.d_x), env, 200, 300, seed=0)


@pytest.fixture
def numpy_backend(monkeypatch):
    monkeypatch.setenv("SPAIS_NUMBA", "0")


def random_proposal(d_s, d_x, seed, states=None):
    """Proposal with random weights and biases, floor far below the outputs.

    With ``states`` the input normalisation is fitted to them, as pretraining
    does; otherwise it is random.
    """
    rng = np.random.default_rng(seed)
    if states is None:
        mean, std = rng.normal(size=d_s), rng.uniform(0.5, 2.0, d_s)
    else:
        mean, std = states.mean(axis=0), states.std(axis=0)
        std = np.where(std > 1e-8, std, 1.0)
    q = GaussianProposal(d_s, d_x, state_mean=mean, state_std=std, logstd_floor=-20.0, seed=seed)
    q.theta[:] = rng.normal(scale=0.3, size=q.size)
    return q


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
