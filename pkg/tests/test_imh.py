import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spais.imh import (ParticleSet, accept_mask, acceptance_probability, log_logistic_cdf,
                       logistic_cdf, mh_accept, update_particle_set, Particle)

from spais.baselines import CEMProposal

from .oracles import imh_stationarity_tv, smoothed_toy_bins


def test_logistic_oracles():
    # reference values from mpmath at 50 digits
    assert log_logistic_cdf(10.0, 1.0) == pytest.approx(-4.539889921686465e-05, rel=1e-14)
    assert log_logistic_cdf(-10.0, 1.0) == pytest.approx(-10.000045398899217, rel=1e-15)
    assert logistic_cdf(1.0, 1.0) == pytest.approx(0.7310585786300049, rel=1e-15)
    assert logistic_cdf(0.0, 0.3) == 0.5


def test_logistic_limits_and_scale():
    assert logistic_cdf(np.inf, 0.1) == 1.0 and logistic_cdf(-np.inf, 0.1) == 0.0
    assert logistic_cdf(0.2, 0.1) == pytest.approx(logistic_cdf(2.0, 1.0), rel=1e-15)
    assert np.isfinite(log_logistic_cdf(-1e6, 1e-3))


@pytest.mark.parametrize("beta", [0.0, -1.0])
def test_logistic_rejects_nonpositive_beta(beta):
    with pytest.raises(ValueError):
        logistic_cdf(0.0, beta)
    with pytest.raises(ValueError):
        log_logistic_cdf(0.0, beta)


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-50, 50), b=st.floats(-50, 50), beta=st.floats(1e-3, 10))
def test_logistic_monotone(a, b, beta):
    lo, hi = min(a, b), max(a, b)
    assert log_logistic_cdf(lo, beta) <= log_logistic_cdf(hi, beta)
    assert np.exp(log_logistic_cdf(a, beta)) == pytest.approx(logistic_cdf(a, beta), rel=1e-12,
                                                              abs=1e-300)


def test_acceptance_rule():
    assert acceptance_probability(0.0, 1.0) == 1.0
    assert acceptance_probability(0.0, np.log(0.25)) == pytest.approx(0.25)
    # better proposals always win; u = 0 always accepts
    assert accept_mask(np.array([0.0]), np.array([0.1]), np.array([0.999999]))[0]
    assert accept_mask(np.array([0.0]), np.array([-30.0]), np.array([0.0]))[0]
    assert not accept_mask(np.array([0.0]), np.array([np.log(0.25)]), np.array([0.3]))[0]
    assert accept_mask(np.array([0.0]), np.array([np.log(0.25)]), np.array([0.2]))[0]


def test_mh_accept_keeps_current_on_rejection():
    cur, prop = Particle("cur", 0.0), Particle("prop", -1e9)
    kept, ok = mh_accept(cur, prop, seed=1)
    assert kept is cur and not ok
    won, ok = mh_accept(cur, Particle("prop", 5.0), seed=1)
    assert won.trajectory == "prop" and ok


class _Rows:
    """Minimal batch: row-wise ``where`` over a label array."""

    def __init__(self, labels):
        self.labels = np.asarray(labels)

    def __len__(self):
        return len(self.labels)

    def where(self, mask, other):
        return _Rows(np.where(mask, other.labels, self.labels))


def test_update_is_pairwise():
    cur = ParticleSet(_Rows(["a", "b", "c"]), np.array([0.0, 0.0, 0.0]))
    prop = ParticleSet(_Rows(["A", "B", "C"]), np.array([5.0, -1e9, 5.0]))
    out, rate = update_particle_set(cur, prop, seed=0)
    assert out.batch.labels.tolist() == ["A", "b", "C"]
    np.testing.assert_array_equal(out.log_weights, [5.0, 0.0, 5.0])
    assert rate == pytest.approx(2 / 3)


def test_update_size_mismatch():
    cur = ParticleSet(_Rows(["a"]), np.zeros(1))
    with pytest.raises(ValueError, match="mismatch"):
        update_particle_set(cur, ParticleSet(_Rows(["A", "B"]), np.zeros(2)), seed=0)


def test_update_is_deterministic_in_seed():
    rng = np.random.default_rng(0)
    cur = ParticleSet(_Rows(np.arange(100)), rng.normal(size=100))
    prop = ParticleSet(_Rows(np.arange(100, 200)), rng.normal(size=100))
    a, _ = update_particle_set(cur, prop, seed=3)
    b, _ = update_particle_set(cur, prop, seed=3)
    np.testing.assert_array_equal(a.batch.labels, b.batch.labels)


def test_kernel_preserves_relaxed_target(toy):
    q = CEMProposal([2.3], [0.8], [0.01])
    tv, rate = imh_stationarity_tv(toy, q, beta=0.5, n_particles=5000, sweeps=6, seed=1)
    assert 0.05 < rate < 0.95
    assert tv < 0.03


def test_stationarity_check_detects_a_broken_kernel(toy):
    def always_accept(ps, props, seed):
        return props, 1.0
    q = CEMProposal([2.3], [0.8], [0.01])
    tv, _ = imh_stationarity_tv(toy, q, beta=0.5, n_particles=5000, sweeps=2, seed=2,
                                kernel=always_accept)
    assert tv > 0.1


def test_smoothed_target_bins_sum_to_one():
    edges, mass = smoothed_toy_bins(2.0, 0.01)
    assert mass.sum() == pytest.approx(1.0, abs=1e-9)
    assert edges[0] > 1.9 and edges.size == 51
