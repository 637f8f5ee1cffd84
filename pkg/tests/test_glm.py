import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize
from scipy.special import expit

from sace import glm
from sace.errors import ConvergenceError, DataError, DegenerateError, SeparationError


def test_intercept_only_logistic():
    y = np.r_[np.ones(30), np.zeros(70)]
    fit = glm.fit_logistic(np.ones((100, 1)), y)
    assert fit.coefficients[0] == pytest.approx(np.log(0.3 / 0.7), abs=1e-10)
    assert fit.coefficients[0] == pytest.approx(-0.8473, abs=1e-4)
    assert fit.converged


def test_all_zero_response_is_flagged():
    with pytest.raises((SeparationError, ConvergenceError, DegenerateError)):
        glm.fit_logistic(np.ones((50, 1)), np.zeros(50))


def test_separation_names_column():
    x = np.linspace(-1, 1, 40)
    y = (x > 0).astype(float)
    with pytest.raises(SeparationError) as info:
        glm.fit_logistic(glm.design(x), y)
    assert info.value.column in (0, 1)


def test_logistic_matches_direct_optimization(rng):
    X = glm.design(rng.normal(size=(400, 2)))
    y = rng.binomial(1, expit(X @ [0.3, -1.0, 0.7])).astype(float)
    fit = glm.fit_logistic(X, y)

    def nll(b):
        eta = X @ b
        return -np.sum(y * eta - np.logaddexp(0, eta))

    ref = minimize(nll, np.zeros(3), method="BFGS", options={"gtol": 1e-10}).x
    np.testing.assert_allclose(fit.coefficients, ref, atol=1e-5)
    # covariance is the inverse observed information
    p = expit(X @ fit.coefficients)
    info = X.T @ (X * (p * (1 - p))[:, None])
    np.testing.assert_allclose(fit.covariance, np.linalg.inv(info), rtol=1e-8)


def test_logistic_consistency_large_n(rng):
    x = rng.normal(size=100_000)
    y = rng.binomial(1, expit(-2 + x)).astype(float)
    fit = glm.fit_logistic(glm.design(x), y)
    assert np.all(np.abs(fit.coefficients - [-2, 1]) < 3 * fit.se)


def test_score_and_likelihood_path(rng):
    X = glm.design(rng.normal(size=(300, 3)))
    y = rng.binomial(1, expit(X @ [0.5, 2.0, -1.5, 1.0])).astype(float)
    fit = glm.fit_logistic(X, y)
    assert fit.score_norm <= glm.SCORE_TOL * X.shape[0]
    path = np.asarray(fit.loglik_path)
    assert np.all(np.diff(path) >= -1e-12)
    assert np.allclose(fit.covariance, fit.covariance.T)
    assert np.all(np.linalg.eigvalsh(fit.covariance) >= 0)


def test_linear_exact():
    x = np.arange(10.0)
    fit = glm.fit_linear(x[:, None], 2 * x)
    assert fit.coefficients[0] == pytest.approx(2.0, abs=1e-10)
    assert fit.sigma2 == 0.0


def test_linear_intercept_only_is_mean(rng):
    y = rng.normal(size=50)
    fit = glm.fit_linear(np.ones((50, 1)), y)
    assert fit.coefficients[0] == pytest.approx(y.mean(), abs=1e-12)


def test_linear_matches_lstsq_and_covers_truth(rng):
    X = glm.design(rng.normal(size=(5000, 2)))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(size=5000)
    fit = glm.fit_linear(X, y)
    np.testing.assert_allclose(fit.coefficients, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-10)
    assert np.all(np.abs(fit.coefficients - [1, -2, 0.5]) < 3 * fit.se)


def test_rank_deficient_rejected():
    x = np.arange(10.0)
    with pytest.raises(Exception):
        glm.fit_linear(np.column_stack([np.ones(10), x, 2 * x]), x)


def test_predict_examples():
    f = glm.GlmFit("logit", np.array([0.0]), np.eye(1), True, 1, 1)
    assert glm.predict(f, [1.0]) == 0.5
    f = glm.GlmFit("identity", np.array([1.0, 2.0]), np.eye(2), True, 1, 1)
    assert glm.predict(f, [1.0, 3.0]) == 7.0
    f = glm.GlmFit("logit", np.array([-1.0, 1.0]), np.eye(2), True, 1, 1)
    assert glm.predict(f, [1.0, 1.0]) == 0.5
    with pytest.raises(DataError):
        glm.predict(f, [1.0, 1.0, 1.0])


def test_wald_examples():
    f = glm.GlmFit("identity", np.array([0.0, 1.96]), np.eye(2), True, 1, 1)
    assert glm.wald_test(f, 0) == 1.0
    assert glm.wald_test(f, 1) == pytest.approx(0.05, abs=1e-3)
    f0 = glm.GlmFit("identity", np.array([1.0]), np.zeros((1, 1)), True, 1, 1)
    with pytest.raises(DegenerateError):
        glm.wald_test(f0, 0)


@pytest.mark.slow
def test_wald_size_under_null():
    rng = np.random.default_rng(7)
    rej = 0
    for _ in range(2000):
        x = rng.normal(size=100)
        y = rng.normal(size=100)
        rej += glm.wald_test(glm.fit_linear(glm.design(x), y), 1) < 0.05
    assert 0.03 <= rej / 2000 <= 0.07


def test_design_interactions():
    a, b = np.array([1.0, 2.0]), np.array([3.0, 4.0])
    D = glm.design(a, b, interactions=[(0, 1)])
    np.testing.assert_array_equal(D, [[1, 1, 3, 3], [1, 2, 4, 8]])


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_logistic_deterministic(seed):
    r = np.random.default_rng(seed)
    X = glm.design(r.normal(size=(80, 1)))
    y = r.binomial(1, 0.5, size=80).astype(float)
    if y.min() == y.max():
        return
    try:
        a = glm.fit_logistic(X, y)
    except SeparationError:
        return
    b = glm.fit_logistic(X, y)
    assert np.array_equal(a.coefficients, b.coefficients)
