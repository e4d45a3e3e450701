import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hamr.errors import ConfigError
from hamr.sampler import draw_batch, make_rng, sampling_probabilities, uniform_distribution


class TestProbabilities:
    def test_closed_form_pair(self):
        # (0.1 * 2, 0.3 * 1) = (0.2, 0.3) normalises to (0.4, 0.6)
        p = sampling_probabilities([0.1, 0.3], [1, 0], tau=1.0, lam=1.0, epsilon=1e-15).p
        np.testing.assert_allclose(p, [0.4, 0.6], atol=1e-9)

    def test_constant_h_is_uniform(self):
        p = sampling_probabilities(np.full(5, 0.7), np.zeros(5), 1.0, 0.0).p
        np.testing.assert_array_equal(p, np.full(5, 0.2))

    def test_small_tau_flattens(self):
        p = sampling_probabilities([0.1, 5.0, 9.0], np.zeros(3), tau=1e-12, lam=0.0).p
        np.testing.assert_allclose(p, np.full(3, 1 / 3), atol=1e-10)

    def test_errors(self):
        for kw in (dict(tau=0.0, lam=0.0), dict(tau=-1.0, lam=0.0), dict(tau=1.0, lam=-0.5),
                   dict(tau=1.0, lam=0.0, epsilon=0.0)):
            with pytest.raises(ConfigError):
                sampling_probabilities([1.0, 2.0], [0.0, 0.0], **kw)
        with pytest.raises(ConfigError):
            sampling_probabilities([1.0, 2.0], [0.0], 1.0, 0.0)

    def test_extreme_scale_is_finite(self):
        p = sampling_probabilities([1e-300, 1e300], [0, 1], tau=1.0, lam=1.0).p
        assert np.all(np.isfinite(p)) and p.sum() == pytest.approx(1.0, abs=1e-12)




@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_monotonicity_and_normalization(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 20))
    h, b = rng.uniform(0, 10, n), rng.uniform(0, 1, n)
    tau, lam = rng.uniform(0.05, 2.0), rng.uniform(0.01, 3.0)
    p = sampling_probabilities(h, np.zeros(n), tau, lam).p
    assert np.all(p > 0) and abs(p.sum() - 1) < 1e-12
    i, j = np.argmax(h), np.argmin(h)
    if h[i] > h[j]:
        assert p[i] > p[j]
    q = sampling_probabilities(np.ones(n), b, tau, lam).p
    i, j = np.argmax(b), np.argmin(b)
    if b[i] > b[j]:
        assert q[i] > q[j]


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_tau_flattening(seed):
    rng = np.random.default_rng(seed)
    h = rng.uniform(0, 10, int(rng.integers(2, 20)))
    t1, t2 = np.sort(rng.uniform(0.01, 3.0, 2))
    e1 = sampling_probabilities(h, np.zeros_like(h), t1, 0.0).entropy()
    e2 = sampling_probabilities(h, np.zeros_like(h), t2, 0.0).entropy()
    assert e1 >= e2 - 1e-12


class TestDraw:
    def test_point_mass(self):
        h = np.zeros(6)
        h[4] = 10.0
        dist = sampling_probabilities(h, np.zeros(6), 1.0, 0.0)
        ids = draw_batch(dist, 10_000, make_rng(0))
        assert np.bincount(ids).argmax() == 4

    def test_uniform_law_of_large_numbers(self):
        n_draws = 100_000
        ids = draw_batch(uniform_distribution(10), n_draws, make_rng(1))
        freq = np.bincount(ids, minlength=10) / n_draws
        sigma = np.sqrt(0.1 * 0.9 / n_draws)
        assert np.all(np.abs(freq - 0.1) <= 3 * sigma)

    def test_nonuniform_law_of_large_numbers(self):
        dist = sampling_probabilities([0.1, 0.3, 2.0, 0.6], [1, 0, 0, 0.5], 0.7, 1.0)
        n_draws = 100_000
        freq = np.bincount(draw_batch(dist, n_draws, make_rng(2)), minlength=4) / n_draws
        sigma = np.sqrt(dist.p * (1 - dist.p) / n_draws)
        assert np.all(np.abs(freq - dist.p) <= 3 * sigma)

    def test_determinism(self):
        dist = uniform_distribution(50)
        a = draw_batch(dist, 32, make_rng(5))
        b = draw_batch(dist, 32, make_rng(5))
        np.testing.assert_array_equal(a, b)
        rng = make_rng(5)
        first, second = draw_batch(dist, 32, rng), draw_batch(dist, 32, rng)
        assert not np.array_equal(first, second)

    def test_batch_size_checked(self):
        with pytest.raises(ConfigError):
            draw_batch(uniform_distribution(3), 0, make_rng(0))
