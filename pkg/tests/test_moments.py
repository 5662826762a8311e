import numpy as np
from hypothesis import given, strategies as st

from pathclosure.models import TbhModel
from pathclosure.moments import isserlis_moment, quadratic_form_moments, quadratic_form_moments_isserlis


def test_isserlis_scalar_moments():
    # x ~ N(mu, s2): E x^2 = mu^2 + s2, E x^3 = mu^3 + 3 mu s2, E x^4 = mu^4 + 6 mu^2 s2 + 3 s2^2
    mu, s2 = 0.7, 1.3
    mean, cov = np.array([mu]), np.array([[s2]])
    assert np.isclose(isserlis_moment(mean, cov, (0, 0)), mu ** 2 + s2)
    assert np.isclose(isserlis_moment(mean, cov, (0, 0, 0)), mu ** 3 + 3 * mu * s2)
    assert np.isclose(isserlis_moment(mean, cov, (0, 0, 0, 0)), mu ** 4 + 6 * mu ** 2 * s2 + 3 * s2 ** 2)


def test_isserlis_centred_fourth_moment():
    cov = np.array([[1.0, 0.3, 0.1], [0.3, 2.0, -0.2], [0.1, -0.2, 0.5]])
    got = isserlis_moment(np.zeros(3), cov, (0, 1, 2, 2))
    assert np.isclose(got, cov[0, 1] * cov[2, 2] + 2 * cov[0, 2] * cov[1, 2])


@given(st.integers(0, 10_000))
def test_trace_formulas_match_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, m = 3, 2
    L = rng.normal(size=(n, n))
    cov = L @ L.T + 0.1 * np.eye(n)
    mean = rng.normal(size=n)
    B = rng.normal(size=(m, n, n))
    c = rng.normal(size=(m, n))
    for a, b in zip(quadratic_form_moments(mean, cov, B, c), quadratic_form_moments_isserlis(mean, cov, B, c)):
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10)


def test_tbh_moments_against_enumeration():
    model = TbhModel(3, 1)
    lam = np.array([0.5, 0.0])
    B, c = model.liouville_quadratic()
    mean, cov = model.trial_mean(lam, 1.0), model.trial_cov(1.0)
    for a, b in zip(quadratic_form_moments(mean, cov, B, c), quadratic_form_moments_isserlis(mean, cov, B, c)):
        assert np.allclose(a, b, atol=1e-14)


def test_batched_means():
    model = TbhModel(3, 2)
    B, c = model.liouville_quadratic()
    lams = np.random.default_rng(0).normal(size=(5, 4))
    cov = model.trial_cov(1.0)
    batched = quadratic_form_moments(model.trial_mean(lams, 1.0), cov, B, c)
    for k in range(5):
        single = quadratic_form_moments(model.trial_mean(lams[k], 1.0), cov, B, c)
        for a, b in zip(batched, single):
            assert np.allclose(a[k], b)
