import numpy as np
import pytest
from scipy import stats

from bayesscm import (
    RngStream,
    bernoulli,
    inverse_gamma,
    normal_vec,
    truncated_normal,
    uniform,
)
from bayesscm.errors import DomainError
from bayesscm.sampling import as_generator
import oracles


def test_stream_reproducibility_and_pinned_values():
    a = RngStream(123, 7).generator.random(3)
    b = RngStream(123, 7).generator.random(3)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(
        a,
        [0.10398137582682843, 0.9878583044780416, 0.9929982076816014],
        rtol=0.0, atol=0.0,
    )


def test_streams_with_different_keys_differ():
    base = RngStream(5, 0).generator.random(64)
    for key in (1, 2, 1000):
        other = RngStream(5, key).generator.random(64)
        assert not np.array_equal(base, other)


def test_stream_attributes_and_siblings():
    s = RngStream(9, 4)
    assert s.seed == 9
    assert s.stream_id == 4
    assert isinstance(s.generator, np.random.Generator)
    sib = s.stream(5)
    assert sib == RngStream(9, 5)
    with pytest.raises(DomainError):
        RngStream(-1, 0)
    with pytest.raises(DomainError):
        RngStream(0, -2)


def test_as_generator_accepts_stream_generator_and_rejects_junk():
    s = RngStream(1, 1)
    assert isinstance(as_generator(s), np.random.Generator)
    gen = np.random.default_rng(0)
    assert as_generator(gen) is gen
    for junk in (42, "seed", None, 3.14):
        with pytest.raises(DomainError):
            as_generator(junk)


@pytest.mark.parametrize("mu,sigma,lo,hi", [
    (0.0, 1.0, -1.0, 2.0),
    (1.0, 2.0, 0.0, np.inf),
    (0.0, 1.0, 6.0, np.inf),
    (-2.0, 0.5, -np.inf, -1.0),
])
def test_truncated_normal_distribution(mu, sigma, lo, hi):
    gen = RngStream(31, 0).generator
    draws = truncated_normal(mu, sigma, lo, hi, gen, size=10_000)
    assert draws.shape == (10_000,)
    assert np.all(draws >= lo) and np.all(draws <= hi)
    a, b = (lo - mu) / sigma, (hi - mu) / sigma
    stat = stats.kstest(draws, stats.truncnorm(a, b, loc=mu, scale=sigma).cdf)
    assert stat.pvalue > 0.001


def test_truncated_normal_moments_match_quadrature():
    gen = RngStream(32, 0).generator
    n = 200_000

    sym = truncated_normal(0.0, 1.0, -10.0, 10.0, gen, size=n)
    assert abs(float(np.mean(sym))) < 0.02

    half = truncated_normal(0.0, 1.0, 0.0, np.inf, gen, size=n)
    ref = oracles.truncated_normal_moment(0.0, 1.0, 0.0, np.inf)
    assert ref == pytest.approx(0.7978845608028655, abs=1e-9)
    assert float(np.mean(half)) == pytest.approx(ref, abs=0.02)

    window = truncated_normal(2.0, 1.5, 0.0, 1.0, gen, size=n)
    m1 = oracles.truncated_normal_moment(2.0, 1.5, 0.0, 1.0)
    m2 = oracles.truncated_normal_moment(2.0, 1.5, 0.0, 1.0, order=2)
    assert m1 == pytest.approx(0.5543465330049554, abs=1e-12)
    assert float(np.mean(window)) == pytest.approx(m1, abs=0.01)
    assert float(np.mean(window ** 2)) == pytest.approx(m2, abs=0.01)


def test_truncated_normal_scalar_and_validation():
    gen = RngStream(33, 0).generator
    one = truncated_normal(0.0, 1.0, 0.0, 1.0, gen)
    assert np.isscalar(one) or np.ndim(one) == 0
    with pytest.raises(DomainError):
        truncated_normal(0.0, 1.0, 1.0, 1.0, gen)
    with pytest.raises(DomainError):
        truncated_normal(0.0, 1.0, 2.0, -2.0, gen)
    with pytest.raises(DomainError):
        truncated_normal(0.0, -1.0, 0.0, 1.0, gen)


def test_inverse_gamma_mean_and_shape():
    gen = RngStream(34, 0).generator
    draws = inverse_gamma(2.5, 1.5, gen, size=100_000)
    assert np.all(draws > 0.0)
    # mean = rate / (shape - 1) = 1.0
    assert float(np.mean(draws)) == pytest.approx(1.0, rel=0.02)

    draws2 = inverse_gamma(3.0, 4.0, gen, size=100_000)
    assert float(np.mean(draws2)) == pytest.approx(2.0, rel=0.02)
    # reciprocal is gamma distributed with the same shape
    stat = stats.kstest(1.0 / draws2, stats.gamma(3.0, scale=1.0 / 4.0).cdf)
    assert stat.pvalue > 0.001


def test_inverse_gamma_matches_scipy_law():
    gen = RngStream(35, 0).generator
    draws = inverse_gamma(2.0, 3.0, gen, size=20_000)
    stat = stats.kstest(draws, stats.invgamma(2.0, scale=3.0).cdf)
    assert stat.pvalue > 0.001


def test_inverse_gamma_validation():
    gen = RngStream(36, 0).generator
    with pytest.raises(DomainError):
        inverse_gamma(0.0, 1.0, gen)
    with pytest.raises(DomainError):
        inverse_gamma(1.0, -1.0, gen)


def test_bernoulli_degenerate_and_typical():
    gen = RngStream(38, 0).generator
    assert np.all(bernoulli(0.0, gen, size=1000) == 0)
    assert np.all(bernoulli(1.0, gen, size=1000) == 1)
    assert bernoulli(1.0, gen) == 1
    draws = bernoulli(0.3, gen, size=100_000)
    assert float(np.mean(draws)) == pytest.approx(0.3, abs=0.01)
    with pytest.raises(DomainError):
        bernoulli(1.5, gen)


def test_uniform_range_and_mean():
    gen = RngStream(37, 0).generator
    u = uniform(-1.0, 1.0, gen, size=200_000)
    assert np.all((u >= -1.0) & (u < 1.0))
    assert abs(float(np.mean(u))) < 0.01
    assert isinstance(uniform(0.0, 2.0, gen), float)
    with pytest.raises(DomainError):
        uniform(1.0, 1.0, gen)


def test_normal_vec_moments_and_validation():
    gen = RngStream(39, 0).generator
    draws = np.stack([normal_vec(np.full(8, 1.0), 2.0, gen) for _ in range(50_000)])
    var = draws.var(axis=0, ddof=1)
    assert np.all(np.abs(var - 2.0) < 0.1)
    assert np.all(np.abs(draws.mean(axis=0) - 1.0) < 0.05)
    exact = normal_vec(np.array([3.0, -1.0]), 0.0, gen)
    np.testing.assert_array_equal(exact, [3.0, -1.0])
    with pytest.raises(DomainError):
        normal_vec(np.zeros((2, 2)), 1.0, gen)
    with pytest.raises(DomainError):
        normal_vec(np.zeros(2), -1.0, gen)
