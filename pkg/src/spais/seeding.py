"""Seed derivation.

Every random stream in a run is keyed by a tuple of non-negative integers and
hashed to a 64-bit seed with a SplitMix64 chain::

    h = 0x6A09E667F3BCC909
    for k in keys:
        h = splitmix64(h ^ k)

Trial ``i`` of an experiment uses ``mix_seed(master_seed, i)``. Rollout ``j`` of
iteration ``k`` within a trial uses ``mix_seed(trial_seed, k, j)``; because the
stream depends only on the key, results do not depend on the order in which
rollouts are executed, and depend on batching only through floating-point
rounding in batched matrix products.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INIT = np.uint64(0x6A09E667F3BCC909)

# stream tags kept far from rollout indices
MH_STREAM = 1 << 40
MC_STREAM = 1 << 41
PRETRAIN_STREAM = 1 << 42
HOLDOUT_STREAM = 1 << 43
INIT_STREAM = 1 << 44


def _splitmix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix_seed(*keys):
    """Hash integer keys (scalars or broadcastable arrays) to uint64 seeds.

    Returns a Python int when every key is a scalar.
    """
    arrays = [np.asarray(k).astype(np.uint64) for k in keys]
    scalar = all(a.ndim == 0 for a in arrays)
    with np.errstate(over="ignore"):
        h = np.full(np.broadcast_shapes(*[a.shape for a in arrays]), _INIT, dtype=np.uint64)
        for a in arrays:
            h = _splitmix64(h ^ a)
    return int(h) if scalar else h


def rollout_seeds(trial_seed, iteration, n):
    """Seeds of rollouts ``0..n-1`` at one iteration of a trial."""
    return mix_seed(trial_seed, iteration, np.arange(n, dtype=np.uint64))


def rng(*keys):
    return np.random.default_rng(mix_seed(*keys))
