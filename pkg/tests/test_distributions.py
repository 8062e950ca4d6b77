"""Densities, scores, KL divergences and special functions against scipy."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from ppolab.distributions import Categorical, Gaussian1D, ScaledBeta, kl
from ppolab.rng import InvalidParameterError, RngStream
from ppolab.special import digamma, log_beta_fn, log_gamma, trigamma

pos = st.floats(min_value=1e-3, max_value=200.0)
shape = st.floats(min_value=1.0, max_value=30.0)


# -- special functions --------------------------------------------------------

def test_log_gamma_factorials():
    assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
    assert log_gamma(5.0) == pytest.approx(math.log(24.0), rel=1e-12)


@given(pos)
@settings(max_examples=300, deadline=None)
def test_log_gamma_against_scipy(x):
    assert log_gamma(x) == pytest.approx(special.gammaln(x), rel=1e-10, abs=1e-10)


@given(pos)
@settings(max_examples=300, deadline=None)
def test_digamma_against_scipy(x):
    assert digamma(x) == pytest.approx(special.psi(x), rel=1e-10, abs=1e-10)


def test_digamma_constants():
    assert digamma(1.0) == pytest.approx(-0.5772156649015329, abs=1e-10)
    assert digamma(2.0) - digamma(1.0) == pytest.approx(1.0, abs=1e-12)


def test_digamma_recurrence():
    x = np.linspace(1.0, 50.0, 2000)
    np.testing.assert_allclose(digamma(x + 1) - digamma(x), 1.0 / x, atol=1e-10)


def test_trigamma_and_log_beta():
    x = np.linspace(0.5, 40.0, 200)
    np.testing.assert_allclose(trigamma(x), special.polygamma(1, x), rtol=1e-9)
    assert log_beta_fn(2.5, 3.5) == pytest.approx(special.betaln(2.5, 3.5), rel=1e-12)


@pytest.mark.parametrize("x", [0.0, -1.0, float("nan")])
def test_special_domain(x):
    with pytest.raises(InvalidParameterError):
        log_gamma(x)
    with pytest.raises(InvalidParameterError):
        digamma(x)


# -- log densities ------------------------------------------------------------

def test_log_prob_examples():
    assert Gaussian1D(0, 1).log_prob(0.0) == pytest.approx(-0.5 * math.log(2 * math.pi))
    assert Gaussian1D(0, 1).log_prob(0.0) == pytest.approx(-0.91894, abs=1e-5)
    assert ScaledBeta(1, 1, 0, 1).log_prob(0.3) == pytest.approx(0.0, abs=1e-14)
    assert Categorical(np.array([0.2, 0.8])).log_prob(1) == pytest.approx(math.log(0.8))


@given(st.floats(-5, 5), st.floats(0.05, 5), st.floats(-10, 10))
@settings(max_examples=200, deadline=None)
def test_gaussian_log_prob_scipy(mu, sigma, a):
    assert Gaussian1D(mu, sigma).log_prob(a) == pytest.approx(stats.norm(mu, sigma).logpdf(a), rel=1e-12, abs=1e-12)


@given(shape, shape, st.floats(-3, 0), st.floats(0.1, 5), st.floats(0.01, 0.99))
@settings(max_examples=200, deadline=None)
def test_beta_log_prob_scipy(a, b, lo, width, u):
    d = ScaledBeta(a, b, lo, lo + width)
    x = lo + u * width
    ref = stats.beta(a, b, loc=lo, scale=width).logpdf(x)
    assert d.log_prob(x) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_beta_outside_support():
    d = ScaledBeta(2.0, 3.0, -1.0, 1.0)
    assert d.log_prob(1.5) == -np.inf
    assert d.log_prob(-1.0) == -np.inf


def test_categorical_bad_index():
    c = Categorical(np.array([0.5, 0.5]))
    for a in (2, -1, 0.5):
        with pytest.raises(InvalidParameterError):
            c.log_prob(a)


def test_invalid_parameters():
    with pytest.raises(InvalidParameterError):
        Gaussian1D(0.0, 0.0)
    with pytest.raises(InvalidParameterError):
        ScaledBeta(0.5, 2.0, 0.0, 1.0)
    with pytest.raises(InvalidParameterError):
        ScaledBeta(2.0, 2.0, 1.0, 1.0)
    with pytest.raises(InvalidParameterError):
        Categorical(np.array([0.3, 0.8]))


def test_normalization_by_quadrature(nprng):
    for _ in range(20):
        g = Gaussian1D(nprng.uniform(-2, 2), nprng.uniform(0.1, 3))
        val, _ = integrate.quad(lambda a: math.exp(g.log_prob(a)), -np.inf, np.inf, epsabs=1e-12)
        assert val == pytest.approx(1.0, abs=1e-6)
        b = ScaledBeta(nprng.uniform(1, 8), nprng.uniform(1, 8), -1.5, 1.5)
        val, _ = integrate.quad(lambda a: math.exp(b.log_prob(a)), -1.5, 1.5, epsabs=1e-12, limit=200)
        assert val == pytest.approx(1.0, abs=1e-6)


# -- scores -------------------------------------------------------------------

def test_score_examples():
    np.testing.assert_allclose(Gaussian1D(0, 1).score(0.0)[0], [0.0, -1.0])
    np.testing.assert_allclose(Gaussian1D(0, 0.5).score(1.0)[0], [4.0, 6.0])
    v = math.log(0.5) + 1.0
    np.testing.assert_allclose(ScaledBeta(1, 1, 0, 1).score(0.5)[0], [v, v], rtol=1e-10)
    assert v == pytest.approx(0.30685, abs=1e-5)


def _fd(f, params, h=1e-6):
    out = []
    for i in range(len(params)):
        up, dn = list(params), list(params)
        up[i] += h
        dn[i] -= h
        out.append((f(*up) - f(*dn)) / (2 * h))
    return np.array(out)


def test_score_matches_finite_differences(nprng):
    for _ in range(200):
        mu, s = nprng.uniform(-2, 2), nprng.uniform(0.2, 2)
        a = mu + s * nprng.standard_normal()
        g = Gaussian1D(mu, s).score(a)[0]
        fd = _fd(lambda m, t: Gaussian1D(m, t).log_prob(a), [mu, s])
        assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))

        al, be = nprng.uniform(1.2, 8), nprng.uniform(1.2, 8)
        x = -1 + 3 * nprng.uniform(0.02, 0.98)
        g = ScaledBeta(al, be, -1, 2).score(x)[0]
        fd = _fd(lambda p, q: ScaledBeta(p, q, -1, 2).log_prob(x), [al, be])
        assert np.max(np.abs(g - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


@pytest.mark.parametrize("dist", [Gaussian1D(0.3, 0.7), ScaledBeta(2.0, 5.0, -1.5, 1.5),
                                  Categorical(np.array([0.1, 0.6, 0.3]))])
def test_score_has_zero_mean(dist):
    s = dist.score(dist.sample(RngStream(5), 10 ** 5))
    if isinstance(dist, Categorical):
        # score in the probability vector is 1/p on the taken action; its mean is all ones
        s = s - 1.0
    se = s.std(axis=0) / np.sqrt(len(s))
    assert np.all(np.abs(s.mean(axis=0)) <= 3 * se + 1e-12)


# -- KL -----------------------------------------------------------------------

def test_kl_examples():
    assert kl(Gaussian1D(0, 1), Gaussian1D(0, 1)) == 0.0
    assert kl(Gaussian1D(1, 1), Gaussian1D(0, 1)) == pytest.approx(0.5)
    p, q = Categorical(np.array([0.5, 0.5])), Categorical(np.array([0.9, 0.1]))
    ref = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
    assert kl(p, q) == pytest.approx(ref)
    assert ref == pytest.approx(0.51083, abs=1e-5)
    assert kl(q, p, "reverse") == pytest.approx(ref)


def test_kl_gaussian_and_beta_by_quadrature(nprng):
    for _ in range(10):
        p = Gaussian1D(nprng.uniform(-1, 1), nprng.uniform(0.3, 2))
        q = Gaussian1D(nprng.uniform(-1, 1), nprng.uniform(0.3, 2))
        val, _ = integrate.quad(lambda a: math.exp(p.log_prob(a)) * (p.log_prob(a) - q.log_prob(a)),
                                -np.inf, np.inf)
        assert kl(p, q) == pytest.approx(val, rel=1e-7, abs=1e-10)
        p = ScaledBeta(nprng.uniform(1, 6), nprng.uniform(1, 6), -5, 5)
        q = ScaledBeta(nprng.uniform(1, 6), nprng.uniform(1, 6), -5, 5)
        val, _ = integrate.quad(lambda a: math.exp(p.log_prob(a)) * (p.log_prob(a) - q.log_prob(a)),
                                -5, 5, limit=200)
        assert kl(p, q) == pytest.approx(val, rel=1e-6, abs=1e-9)


@given(shape, shape, shape, shape)
@settings(max_examples=200, deadline=None)
def test_kl_nonnegative_and_zero_on_equal(a1, b1, a2, b2):
    p, q = ScaledBeta(a1, b1, 0, 1), ScaledBeta(a2, b2, 0, 1)
    assert kl(p, q) >= 0
    assert kl(p, p) == 0.0
    g1, g2 = Gaussian1D(a1, b1), Gaussian1D(a2, b2)
    assert kl(g1, g2) >= 0
    assert kl(g1, g1) == 0.0


def test_kl_rejects_mismatch():
    with pytest.raises(InvalidParameterError):
        kl(Gaussian1D(0, 1), ScaledBeta(2, 2, 0, 1))
    with pytest.raises(InvalidParameterError):
        kl(ScaledBeta(2, 2, 0, 1), ScaledBeta(2, 2, 0, 2))
