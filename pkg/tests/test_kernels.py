"""The numba kernels and the numpy fallback must agree."""
import numpy as np
import pytest

from spais import _accel
from spais.environments import make_env
from spais.traj import NominalSampler, rollout_batch, standard_noise

ENVS = ["toy", "pendulum", "crosswalk", "collision"]
pytestmark = pytest.mark.skipif(not _accel.HAS_NUMBA, reason="numba not installed")


def test_flag_is_read_at_call_time(monkeypatch):
    monkeypatch.setenv("SPAIS_NUMBA", "0")
    assert not _accel.use_numba()
    monkeypatch.setenv("SPAIS_NUMBA", "1")
    assert _accel.use_numba()


def visited_states(env, n=64):
    batch = rollout_batch(env, NominalSampler(env), np.arange(n))
    s = batch.states.reshape(-1, env.d_s)
    x = np.random.default_rng(1).standard_normal((s.shape[0], env.d_x))
    m, sd = env.nominal_mean_std(s)
    return s, m + sd * x


@pytest.mark.parametrize("name", ENVS)
def test_step_parity(name, monkeypatch):
    env = make_env(name)
    s, x = visited_states(env)
    fast = env.step(s, x)
    monkeypatch.setenv("SPAIS_NUMBA", "0")
    slow = env.step(s, x)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", ENVS)
def test_simulate_nominal_parity(name, monkeypatch):
    env = make_env(name)
    eps = np.random.default_rng(2).standard_normal((500, env.horizon, env.d_x)) * 2.0
    fast = env.simulate_nominal(eps)
    monkeypatch.setenv("SPAIS_NUMBA", "0")
    slow = env.simulate_nominal(eps)
    np.testing.assert_allclose(fast, slow, rtol=1e-12, atol=1e-12)
    # failure decisions must match exactly away from the threshold
    far = np.abs(slow - env.gamma) > 1e-9
    np.testing.assert_array_equal((fast >= env.gamma)[far], (slow >= env.gamma)[far])


@pytest.mark.parametrize("name", ENVS)
def test_simulate_matches_rollout(name):
    env = make_env(name)
    seeds = np.arange(100, 132)
    batch = rollout_batch(env, NominalSampler(env), seeds)
    f = env.simulate_nominal(standard_noise(seeds, env.horizon, env.d_x))
    np.testing.assert_allclose(f, batch.f, rtol=1e-12, atol=1e-12)


def test_benchmark_script_runs(tmp_path, capsys):
    import importlib.util
    import json
    import pathlib
    path = pathlib.Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"
    found = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(found)
    found.loader.exec_module(bench)
    out = tmp_path / "bench.json"
    bench.main(["--n", "200", "--repeat", "1", "--envs", "pendulum", "--json", str(out)])
    rows = json.loads(out.read_text())
    assert {r["kernel"] for r in rows} == {"simulate_nominal", "step"}
    assert all(r["max_abs_diff"] < 1e-12 for r in rows)
