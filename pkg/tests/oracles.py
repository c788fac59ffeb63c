"""Independent reference computations shared by unit and acceptance tests."""
import numpy as np
from scipy import integrate, stats

from spais import seeding
from spais.imh import ParticleSet, log_logistic_cdf, update_particle_set
from spais.traj import rollout_batch, smoothed_log_weight


def fd_gradient_error(q, states, xs, h=1e-5, n_coords=60, seed=0, scale=None):
    """Relative error between analytic and central-difference NLL gradients.

    Checks ``n_coords`` random coordinates and one random direction (which
    touches every parameter). Reported is the largest of: the norm-wise error
    over the sampled coordinates, the directional-derivative error, and the
    per-coordinate error over coordinates whose gradient is at least 1e-3 of
    the largest sampled one (smaller ones are dominated by round-off in the
    difference quotient).
    """
    scale = 1.0 / states.shape[0] if scale is None else scale

    def loss(theta):
        return q.with_theta(theta).nll_and_grad(states, xs, scale)[0]

    _, grad = q.nll_and_grad(states, xs, scale)
    rng = np.random.default_rng(seed)
    idx = rng.choice(q.size, size=min(n_coords, q.size), replace=False)
    fd = np.empty(idx.size)
    for j, i in enumerate(idx):
        tp, tm = q.theta.copy(), q.theta.copy()
        tp[i] += h
        tm[i] -= h
        fd[j] = (loss(tp) - loss(tm)) / (2 * h)
    g = grad[idx]
    coord_err = np.linalg.norm(fd - g) / max(np.linalg.norm(fd), 1e-12)
    big = np.abs(g) >= 1e-3 * np.abs(g).max()
    each_err = np.max(np.abs(fd[big] - g[big]) / np.abs(g[big]))
    u = rng.standard_normal(q.size)
    u /= np.linalg.norm(u)
    dd = (loss(q.theta + h * u) - loss(q.theta - h * u)) / (2 * h)
    dir_err = abs(dd - grad @ u) / max(abs(dd), 1e-12)
    return float(max(coord_err, dir_err, each_err))


# -- IMH stationarity on the toy environment -----------------------------------
def smoothed_toy_density(x, gamma, beta):
    """Unnormalised smoothed target of the toy: N(x; 0, 1) P_beta(x - gamma)."""
    return stats.norm.pdf(x) * np.exp(log_logistic_cdf(np.asarray(x) - gamma, beta))


def smoothed_toy_bins(gamma, beta, bins=50):
    """Edges spanning the 0.05%..99.95% quantiles and exact bin masses (tails folded in)."""
    grid = np.linspace(-9.0, 9.0, 400_001)
    cdf = np.cumsum(smoothed_toy_density(grid, gamma, beta))
    cdf /= cdf[-1]
    lo, hi = np.interp([5e-4, 1 - 5e-4], cdf, grid)
    edges = np.linspace(lo, hi, bins + 1)
    # beyond +-12 the standard normal mass is below 1e-32
    cuts = np.concatenate([[-12.0], edges[1:-1], [12.0]])
    mass = np.array([integrate.quad(smoothed_toy_density, a, b, args=(gamma, beta), limit=200,
                                    points=[gamma] if a < gamma < b else None)[0]
                     for a, b in zip(cuts[:-1], cuts[1:])])
    return edges, mass / mass.sum()


def sample_smoothed_toy(n, gamma, beta, rng):
    """Exact draws by rejection from N(0, 1) with acceptance P_beta(x - gamma)."""
    out, have = [], 0
    while have < n:
        x = rng.standard_normal(max(4 * n, 100_000))
        keep = x[np.log(rng.random(x.size)) < log_logistic_cdf(x - gamma, beta)]
        out.append(keep)
        have += keep.size
    return np.concatenate(out)[:n]


def toy_particles(env, q, x, beta):
    """Particle set holding toy trajectories with disturbances ``x`` under proposal q."""
    mean, std = q.mean_std(env.initial_states(x.size))
    eps = ((x - mean[:, 0]) / std[:, 0]).reshape(-1, 1, 1)
    batch = rollout_batch(env, q, np.zeros(x.size, dtype=np.uint64), eps=eps)
    return ParticleSet(batch, smoothed_log_weight(batch, beta, env.gamma))


def imh_stationarity_tv(env, q, beta, n_particles=10_000, sweeps=10, seed=0,
                        kernel=update_particle_set, bins=50):
    """TV between the smoothed toy target and IMH particles started on it.

    ``n_particles`` particles are drawn exactly from the target, then
    ``sweeps`` pairwise IMH sweeps with fresh proposals from the fixed q are
    applied; the histogram pools every post-sweep particle state, i.e.
    ``n_particles * sweeps`` kernel steps. Returns ``(tv, mean_acceptance)``.
    """
    rng = np.random.default_rng(seed)
    ps = toy_particles(env, q, sample_smoothed_toy(n_particles, env.gamma, beta, rng), beta)
    pooled, rates = [], []
    for k in range(sweeps):
        props = rollout_batch(env, q, seeding.rollout_seeds(seed, k, n_particles))
        incoming = ParticleSet(props, smoothed_log_weight(props, beta, env.gamma))
        ps, rate = kernel(ps, incoming, seeding.mix_seed(seed, k, seeding.MH_STREAM))
        pooled.append(ps.batch.f.copy())
        rates.append(rate)
    edges, mass = smoothed_toy_bins(env.gamma, beta, bins)
    x = np.clip(np.concatenate(pooled), edges[0], edges[-1])
    hist = np.histogram(x, bins=edges)[0] / x.size
    return float(0.5 * np.abs(hist - mass).sum()), float(np.mean(rates))
