"""Logistic and linear regression fitted from scratch.

Logistic fits use iteratively reweighted least squares (Newton-Raphson on
the binomial log-likelihood) with step-halving. Linear fits are ordinary
least squares through a QR factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .errors import ConvergenceError, DataError, DegenerateError, RankDeficientError, SeparationError

MAX_ITER = 100
SCORE_TOL = 1e-8  # multiplied by n
SEPARATION_BOUND = 30.0
MAX_HALVINGS = 40


@dataclass(frozen=True)
class GlmFit:
    """Result of a GLM fit.

    Attributes
    ----------
    link : {"logit", "identity"}
    coefficients : ndarray
        Intercept first when the design has one.
    covariance : ndarray
        Inverse observed information (logit) or ``sigma2 * inv(X'X)`` (identity).
    converged : bool
    iterations : int
    n_used : int
    loglik_path : tuple of float
        Log-likelihood after each accepted iterate, logit fits only.
    sigma2 : float
        Residual variance, identity fits only.
    """

    link: str
    coefficients: np.ndarray
    covariance: np.ndarray
    converged: bool
    iterations: int
    n_used: int
    loglik_path: tuple = ()
    sigma2: float = float("nan")
    score_norm: float = 0.0

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def _check_design(design, response):
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(response, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DataError(f"design has {X.shape[0]} rows but response has {y.size}")
    if y.size == 0:
        raise DataError("cannot fit a model on zero rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("design and response must be finite")
    if X.shape[1] > X.shape[0] or np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficientError(f"design matrix ({X.shape[0]}x{X.shape[1]}) is rank deficient")
    return X, y


def _loglik(eta, y):
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(design, response, max_iter: int = MAX_ITER) -> GlmFit:
    """Maximum-likelihood logistic regression by IRLS.

    Parameters
    ----------
    design : array_like, shape (n, p)
        Full-column-rank design, usually with a leading column of ones.
    response : array_like of {0, 1}

    Returns
    -------
    GlmFit

    Raises
    ------
    SeparationError
        The response is constant, or a coefficient exceeded 30 in absolute
        value during iteration.
    ConvergenceError
        The score did not vanish within ``max_iter`` iterations.
    """
    X, y = _check_design(design, response)
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("logistic response must be coded 0/1")
    n, p = X.shape
    if y.min() == y.max():
        raise SeparationError(0, float("inf") if y[0] == 1.0 else float("-inf"))
    tol = SCORE_TOL * n
    beta = np.zeros(p)
    eta = X @ beta
    ll = _loglik(eta, y)
    path = [ll]
    for it in range(max_iter + 1):
        mu = expit(eta)
        score = X.T @ (y - mu)
        snorm = float(np.max(np.abs(score)))
        w = mu * (1.0 - mu)
        info = (X * w[:, None]).T @ X
        if snorm <= tol:
            # one extra Newton step is nearly free and reaches machine precision
            try:
                cand = beta + np.linalg.solve(info, score)
            except np.linalg.LinAlgError:
                cand = beta
            eta_c = X @ cand
            score_c = float(np.max(np.abs(X.T @ (y - expit(eta_c)))))
            if score_c < snorm and not (np.abs(cand) > SEPARATION_BOUND).any():
                beta, eta, snorm = cand, eta_c, score_c
                mu = expit(eta)
                w = mu * (1.0 - mu)
                info = (X * w[:, None]).T @ X
                path.append(_loglik(eta, y))
            cov = np.linalg.inv(info)
            cov = 0.5 * (cov + cov.T)
            return GlmFit("logit", beta, cov, True, it, n, tuple(path), score_norm=snorm)
        if it == max_iter:
            break
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            j = int(np.argmax(np.abs(beta)))
            raise SeparationError(j, beta[j]) from None
        t = 1.0
        for _ in range(MAX_HALVINGS):
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = _loglik(eta_c, y)
            if ll_c >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            t *= 0.5
        else:
            raise ConvergenceError("step-halving failed to increase the log-likelihood")
        if (np.abs(cand) > SEPARATION_BOUND).any():
            j = int(np.argmax(np.abs(cand)))
            raise SeparationError(j, cand[j])
        beta, eta = cand, eta_c
        ll = max(ll_c, ll)
        path.append(ll_c)
    raise ConvergenceError(f"IRLS did not converge in {max_iter} iterations (score norm {snorm:.3g})")


def fit_linear(design, response) -> GlmFit:
    """Ordinary least squares.

    The residual variance uses ``n - p`` degrees of freedom and is set to
    exactly zero when the fit is perfect up to rounding.
    """
    X, y = _check_design(design, response)
    n, p = X.shape
    qmat, r = np.linalg.qr(X)
    beta = np.linalg.solve(r, qmat.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    scale = max(1.0, float(np.mean(y * y)))
    if rss <= (1e-12) ** 2 * n * scale:
        rss = 0.0
    sigma2 = rss / (n - p) if n > p else (0.0 if rss == 0.0 else float("nan"))
    rinv = np.linalg.inv(r)
    cov = sigma2 * (rinv @ rinv.T)
    cov = 0.5 * (cov + cov.T)
    return GlmFit("identity", beta, cov, True, 1, n, sigma2=sigma2)


def predict(fit: GlmFit, row):
    """Fitted mean at one design row (returns float) or many rows (returns array)."""
    r = np.asarray(row, dtype=float)
    if r.shape[-1] != fit.coefficients.size:
        raise DataError(f"row has length {r.shape[-1]}, model has {fit.coefficients.size} coefficients")
    eta = r @ fit.coefficients
    out = expit(eta) if fit.link == "logit" else eta
    return float(out) if np.ndim(out) == 0 else out


def wald_test(fit: GlmFit, index: int) -> float:
    """Two-sided normal-approximation p-value for ``coefficient[index] == 0``."""
    p = fit.coefficients.size
    if not -p <= index < p:
        raise DataError(f"index {index} out of range for {p} coefficients")
    var = float(fit.covariance[index, index])
    if not np.isfinite(var):
        raise DegenerateError(f"variance of coefficient {index} is not finite")
    if var <= 0.0:
        raise DegenerateError(f"zero estimated variance for coefficient {index}")
    zval = float(fit.coefficients[index]) / np.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(abs(zval))))


def wald_z(fit: GlmFit, index: int) -> float:
    var = float(fit.covariance[index, index])
    if not np.isfinite(var) or var <= 0.0:
        raise DegenerateError(f"zero estimated variance for coefficient {index}")
    return float(fit.coefficients[index]) / np.sqrt(var)


def design(*columns, intercept: bool = True, interactions=()) -> np.ndarray:
    """Main-effects design matrix.

    Parameters
    ----------
    *columns : array_like
        1-D vectors or 2-D blocks stacked left to right.
    intercept : bool
        Prepend a column of ones.
    interactions : iterable of (int, int)
        Products of regressor columns (0-based, before the intercept) appended
        at the end. Only used when a caller asks for them explicitly.
    """
    blocks = []
    for c in columns:
        a = np.asarray(c, dtype=float)
        blocks.append(a[:, None] if a.ndim == 1 else a)
    base = np.hstack(blocks) if blocks else None
    if base is None:
        raise DataError("design needs at least one column or an intercept with a row count")
    extra = [base[:, i] * base[:, j] for i, j in interactions]
    if extra:
        base = np.column_stack([base] + extra)
    if intercept:
        base = np.column_stack([np.ones(base.shape[0]), base])
    return base
