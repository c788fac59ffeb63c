import csv
import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spais.environments import ConfigError, DynamicsError, make_env
from spais.traj import NominalSampler, rollout_batch

from .conftest import DATA


def test_initial_states():
    assert np.array_equal(make_env("pendulum").initial_state(seed=3), [0.0, 0.0])
    assert np.array_equal(make_env("toy").initial_state(), [0.0])
    cw = make_env("crosswalk")
    s = cw.initial_state(seed=1)
    assert s[0] == -40.0 and s[1] == 10.0
    assert s[3] == cw.params["ped_y0"] and abs(s[3]) > cw.params["lane_band"]
    assert np.array_equal(cw.initial_state(seed=1), cw.initial_state(seed=2))


def test_pendulum_upright_is_fixed_point(pendulum):
    assert np.array_equal(pendulum.step([0.0, 0.0], [0.0]), [0.0, 0.0])


def test_pendulum_step_regression(pendulum):
    # theta_dot' = 0.05 (10 sin 0.1 + clip(-4, -3, 3)), theta' = 0.1 + 0.05 theta_dot'
    s = pendulum.step([0.1, 0.0], [0.0])
    assert s[1] == pytest.approx(-0.10008329167658592, abs=1e-15)
    assert s[0] == pytest.approx(0.0949958354161707, abs=1e-15)


def test_pendulum_nominal_log_prob_at_mean(pendulum):
    sigma = pendulum.params["sigma_x"]
    assert pendulum.nominal_log_prob([0.0, 0.0], [0.0]) == pytest.approx(
        -0.5 * math.log(2 * math.pi * sigma ** 2), rel=1e-14)


def test_toy_nominal_log_prob(toy):
    assert toy.nominal_log_prob([0.0], [2.0]) == pytest.approx(-2.9189385332046727, abs=1e-14)


@pytest.mark.parametrize("name", ["toy", "pendulum", "crosswalk", "collision"])
def test_nominal_sample_round_trip(name):
    env = make_env(name)
    s = env.initial_state()
    x = env.nominal_sample(s, seed=5)
    assert x.shape == (env.d_x,)
    mean, std = env.nominal_mean_std(s)
    direct = float(np.sum(-0.5 * ((x - mean[0]) / std[0]) ** 2 - np.log(std[0])
                          - 0.5 * math.log(2 * math.pi)))
    assert np.isfinite(env.nominal_log_prob(s, x))
    assert env.nominal_log_prob(s, x) == pytest.approx(direct, rel=1e-12)
    assert np.all(std > 0)


def test_crosswalk_has_five_channels():
    cw = make_env("crosswalk")
    mean, std = cw.nominal_mean_std(cw.initial_state())
    assert mean.shape == (1, 5) and np.all(std > 0)


def test_pendulum_evaluate(pendulum):
    zeros = np.zeros((20, 2))
    assert pendulum.evaluate(zeros) == 0.0
    assert not pendulum.is_failure(pendulum.evaluate(zeros))
    one = zeros.copy()
    one[7, 0] = 1.0
    assert pendulum.evaluate(one) == 1.0
    assert pendulum.is_failure(pendulum.evaluate(one))


def test_toy_evaluate(toy):
    assert toy.is_failure(toy.evaluate([[2.5]]))
    assert not toy.is_failure(toy.evaluate([[1.5]]))


@pytest.mark.parametrize("name", ["toy", "pendulum", "crosswalk", "collision"])
def test_rollout_f_matches_evaluate(name):
    env = make_env(name)
    batch = rollout_batch(env, NominalSampler(env), np.arange(8))
    np.testing.assert_array_equal(batch.f, env.evaluate(batch.states[:, 1:]))


def test_dimension_mismatch_rejected(pendulum):
    with pytest.raises(ValueError):
        pendulum.step([0.0, 0.0], [0.0, 1.0])


def test_non_finite_state_raises(pendulum):
    with pytest.raises(DynamicsError):
        pendulum.step([np.inf, 0.0], [0.0])


def test_unknown_env_and_param():
    with pytest.raises(ConfigError, match="nosuch"):
        make_env("nosuch")
    with pytest.raises(ConfigError, match="bogus"):
        make_env("pendulum", {"bogus": 1})


def test_param_hash_tracks_parameters():
    a = make_env("pendulum")
    assert a.param_hash() == make_env("pendulum").param_hash()
    assert a.param_hash() != make_env("pendulum", {"sigma_x": 2.5}).param_hash()


# -- IDM -----------------------------------------------------------------------
def reference_idm(v, gap, lead_v, p):
    """Textbook IDM (Treiber et al. 2000) written independently of the package."""
    s_star = p["s0"] + v * p["headway"] + v * (v - lead_v) / (2 * math.sqrt(p["a_max"] * p["b_comf"]))
    s_star = max(s_star, p["s0"])
    return p["a_max"] * (1 - (v / p["v0"]) ** p["delta"] - (s_star / gap) ** 2)


@settings(max_examples=200, deadline=None)
@given(v=st.floats(0.0, 15.0), gap=st.floats(0.5, 80.0), lead_v=st.floats(-2.0, 2.0))
def test_idm_matches_reference(v, gap, lead_v):
    cw = make_env("crosswalk")
    got = cw.idm(np.array([v]), np.array([gap]), np.array([lead_v]), np.array([True]))[0]
    assert got == pytest.approx(reference_idm(v, gap, lead_v, cw.params), rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(v=st.floats(0.5, 15.0), gap=st.floats(1.0, 60.0), shrink=st.floats(0.05, 0.9))
def test_idm_brakes_harder_as_gap_shrinks(v, gap, shrink):
    cw = make_env("crosswalk")
    a_far = cw.idm(np.array([v]), np.array([gap]), np.array([0.0]), np.array([True]))[0]
    a_near = cw.idm(np.array([v]), np.array([gap * shrink]), np.array([0.0]), np.array([True]))[0]
    assert a_near < a_far


def test_crosswalk_av_slows_for_pedestrian_in_lane():
    cw = make_env("crosswalk")
    # pedestrian standing in the lane 15 m ahead, no noise
    s = np.array([[-15.0, 10.0, 0.0, 0.0, 0.0, 0.0]])
    nxt = cw.step(s, np.zeros((1, 5)))
    assert nxt[0, 1] < 10.0
    # same pedestrian perceived far outside the lane: free road, no braking
    fooled = cw.step(s, np.array([[0.0, 0.0, 0.0, 10.0, 0.0]]))
    assert fooled[0, 1] >= 10.0 - 1e-12


# -- failure fixtures ------------------------------------------------------------
def load_fixtures():
    fixtures = {}
    with open(os.path.join(DATA, "failure_fixtures.csv")) as fh:
        for row in csv.DictReader(fh):
            key = (row["env"], row["label"])
            xs = [float(row[f"x_{k}"]) for k in range(5) if row[f"x_{k}"] != ""]
            fixtures.setdefault(key, []).append(xs)
    return {k: np.array(v) for k, v in fixtures.items()}


FIXTURES = load_fixtures()


@pytest.mark.parametrize("key", sorted(FIXTURES))
def test_failure_fixture_reaches_failure(key):
    env = make_env(key[0])
    xs = FIXTURES[key]
    assert xs.shape == (env.horizon, env.d_x)
    s = env.initial_state()
    visited = []
    for t in range(env.horizon):
        s = env.step(s, xs[t], t)
        visited.append(s)
    visited = np.array(visited)
    assert env.is_failure(env.evaluate(visited))
    if key[0] == "pendulum":
        theta_at_failure = visited[np.argmax(np.abs(visited[:, 0])), 0]
        assert np.sign(theta_at_failure) == (1 if key[1] == "right" else -1)


def test_every_environment_has_a_fixture_and_pendulum_is_bimodal():
    envs = {k[0] for k in FIXTURES}
    assert envs == {"toy", "pendulum", "crosswalk", "collision"}
    assert ("pendulum", "left") in FIXTURES and ("pendulum", "right") in FIXTURES
