#!/usr/bin/env python3
"""Benchmark the numba kernels against the numpy fallback.

Times the fused nominal simulation (the Monte Carlo hot path) and a single
batched step for every environment with a numba kernel, and checks that the
two backends agree. Usage::

    python3 benchmarks/bench_kernels.py [--n 100000] [--repeat 3] [--json out.json]
"""
import argparse
import json
import os
import time

import numpy as np

from spais import _accel
from spais.environments import make_env


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def with_backend(flag, fn):
    old = os.environ.get("SPAIS_NUMBA")
    os.environ["SPAIS_NUMBA"] = flag
    try:
        return fn()
    finally:
        if old is None:
            del os.environ["SPAIS_NUMBA"]
        else:
            os.environ["SPAIS_NUMBA"] = old


def bench_env(name, n, repeat):
    env = make_env(name)
    eps = np.random.default_rng(0).standard_normal((n, env.horizon, env.d_x))
    states = env.initial_states(n)
    mean, std = env.nominal_mean_std(states)
    x = mean + std * eps[:, 0]
    rows = []
    for kernel, fn in (("simulate_nominal", lambda: env.simulate_nominal(eps)),
                       ("step", lambda: env.step(states, x))):
        with_backend("1", fn)                      # JIT compile / load cache
        t_nb, out_nb = with_backend("1", lambda: best_time(fn, repeat))
        t_np, out_np = with_backend("0", lambda: best_time(fn, repeat))
        rows.append({"env": name, "kernel": kernel, "n": n, "numba_s": t_nb, "numpy_s": t_np,
                     "speedup": t_np / t_nb, "max_abs_diff": float(np.max(np.abs(out_nb - out_np)))})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000, help="rollouts per call")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--envs", nargs="+", default=["pendulum", "crosswalk", "collision"])
    ap.add_argument("--threads", type=int)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    _accel.set_threads(args.threads)

    rows = [r for name in args.envs for r in bench_env(name, args.n, args.repeat)]
    print(f"{'env':<10} {'kernel':<17} {'n':>8} {'numba s':>9} {'numpy s':>9} "
          f"{'speedup':>8} {'max|diff|':>10}")
    for r in rows:
        print(f"{r['env']:<10} {r['kernel']:<17} {r['n']:>8} {r['numba_s']:>9.4f} "
              f"{r['numpy_s']:>9.4f} {r['speedup']:>7.1f}x {r['max_abs_diff']:>10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
