"""Standard errors and confidence intervals.

* :func:`sandwich_se` for smooth functionals of M-estimators.
* :func:`kernel_plugin_variance` for CSACE with Nadaraya-Watson nuisances.
* :func:`closed_form_variance` and :func:`mover_logit_ci` for the
  no-covariate binary estimator.
* :func:`bootstrap` for anything else.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from . import estimators as est
from . import glm, kernel
from .data import Dataset
from .errors import BootstrapError, DataError, DegenerateError, EstimationError, UsageError

DEFAULT_B = 1000
FD_STEP = 1e-6


@dataclass
class VarianceReport:
    """Variance of an estimator together with an interval when one was built.

    ``bias_correction`` is the estimated leading-order bias
    ``E(estimate) - target``; subtract it from the point estimate to correct.
    """

    method: str
    variance: float
    estimate: float | None = None
    bias_correction: float | None = None
    ci: tuple | None = None
    replicates_used: int | None = None
    replicates_dropped: int | None = None
    details: dict = field(default_factory=dict)

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "variance": self.variance,
            "se": self.se,
            "estimate": self.estimate,
            "bias_correction": self.bias_correction,
            "ci": None if self.ci is None else {"lower": self.ci[0], "upper": self.ci[1], "level": self.ci[2]},
            "replicates_used": self.replicates_used,
            "replicates_dropped": self.replicates_dropped,
            "details": self.details,
        }


def _zcrit(level: float) -> float:
    if not 0 < level < 1:
        raise UsageError("level must lie in (0, 1)")
    return float(norm.ppf(0.5 + level / 2.0))


def wald_ci(point: float, se: float, level: float = 0.95) -> tuple:
    z = _zcrit(level)
    return (point - z * se, point + z * se, level)


# ---------------------------------------------------------------------------
# sandwich


def _jacobian(fn, theta):
    """Central-difference Jacobian of ``fn`` (vector valued) at ``theta``."""
    theta = np.asarray(theta, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(theta), dtype=float))
    J = np.empty((f0.size, theta.size))
    for j in range(theta.size):
        h = FD_STEP * (1.0 + abs(theta[j]))
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        J[:, j] = (np.atleast_1d(fn(tp)) - np.atleast_1d(fn(tm))) / (2.0 * h)
    return J


def sandwich_se(ds: Dataset, theta_hat, score: Callable, delta_of_theta: Callable, x, level: float = 0.95,
                root_tol: float = 1e-6) -> VarianceReport:
    """Sandwich variance of ``delta(x; theta_hat)``.

    Parameters
    ----------
    score : callable
        ``score(ds, theta)`` returning the ``(n, p)`` matrix of per-record
        estimating functions.
    delta_of_theta : callable
        ``delta_of_theta(x, theta)`` returning a scalar.

    Returns
    -------
    VarianceReport
        ``D B D' / n`` with ``D = grad(delta)' inv(dE[U]/dtheta)`` and
        ``B = mean(U U')``; both derivatives by central differences.
    """
    theta = np.asarray(theta_hat, dtype=float)
    U = np.asarray(score(ds, theta), dtype=float)
    n = U.shape[0]
    if U.ndim != 2 or U.shape[1] != theta.size:
        raise DataError(f"score must return an (n, {theta.size}) array")
    total = np.abs(U.sum(axis=0))
    scale = np.abs(U).sum(axis=0) + 1.0
    if np.any(total > root_tol * scale):
        raise EstimationError(f"theta_hat is not a root of the estimating equation (max |sum U| = {total.max():.3g})")
    A = _jacobian(lambda th: np.asarray(score(ds, th)).mean(axis=0), theta)
    g = _jacobian(lambda th: delta_of_theta(x, th), theta)[0]
    try:
        D = np.linalg.solve(A.T, g)
    except np.linalg.LinAlgError:
        raise DegenerateError("Jacobian of the mean estimating function is singular") from None
    if not np.isfinite(D).all() or np.linalg.cond(A) > 1e12:
        raise DegenerateError("Jacobian of the mean estimating function is singular")
    B = U.T @ U / n
    var = float(max(D @ B @ D / n, 0.0))
    point = float(delta_of_theta(x, theta))
    return VarianceReport("sandwich", var, estimate=point, ci=wald_ci(point, np.sqrt(var), level))


@dataclass(frozen=True)
class _Block:
    name: str
    rows: np.ndarray
    design: Callable  # ds -> full design (n, p)
    response: np.ndarray
    link: str


def _blocks_for(ds: Dataset, method: str) -> list:
    z, s, y, v = ds.z, ds.s, ds.y, ds.v
    X = ds.x
    binary = ds.outcome_kind == "binary"
    ylink = "logit" if binary else "identity"
    yy = np.nan_to_num(y)
    vv = np.nan_to_num(v)

    def dx(_):
        return est._x_design(X)

    def dvx(_):
        return glm.design(vv, X)

    t, c = z == 1, z == 0
    blocks = [_Block("mu_0", c & (s == 1), dx, yy, ylink)]
    if method == "survivor_case":
        blocks.append(_Block("mu_1", t & (s == 1), dx, yy, ylink))
        return blocks
    if not ds.v_available_for_treated:
        raise DataError("v must be recorded for every treated unit")
    blocks.append(_Block("pi_T", t, dvx, s.astype(float), "logit"))
    blocks.append(_Block("mu_T", t & (s == 1), dvx, yy, ylink))
    if method == "wzr":
        if not ds.v_available_for_controls:
            raise DataError("the WZR estimator needs v for controls")
        blocks.append(_Block("pi_C_vx", c, dvx, s.astype(float), "logit"))
    return blocks


def parametric_model(ds: Dataset, method: str, rho=1.0):
    """Stacked main-effects GLMs for one CSACE pipeline.

    Returns
    -------
    theta_hat : ndarray
    score : callable ``(ds, theta) -> (n, p)``
    delta_of_theta : callable ``(x, theta) -> float``
    """
    if method not in ("survivor_case", "proposed", "rho_adjusted", "wzr"):
        raise UsageError(f"no parametric model for method {method!r}")
    blocks = _blocks_for(ds, method)
    designs = [b.design(ds) for b in blocks]
    sizes = [d.shape[1] for d in designs]
    cuts = np.cumsum([0] + sizes)
    thetas = []
    for b, D in zip(blocks, designs):
        fit = glm.fit_logistic(D[b.rows], b.response[b.rows]) if b.link == "logit" else glm.fit_linear(
            D[b.rows], b.response[b.rows])
        thetas.append(fit.coefficients)
    theta_hat = np.concatenate(thetas)

    def score(_ds, theta):
        cols = []
        for k, (b, D) in enumerate(zip(blocks, designs)):
            beta = theta[cuts[k]:cuts[k + 1]]
            eta = D @ beta
            mean = expit(eta) if b.link == "logit" else eta
            resid = np.where(b.rows, b.response - mean, 0.0)
            cols.append(D * resid[:, None])
        return np.hstack(cols)

    index = {b.name: k for k, b in enumerate(blocks)}

    def pred(name, theta, row):
        k = index[name]
        beta = theta[cuts[k]:cuts[k + 1]]
        eta = float(row @ beta)
        return expit(eta) if blocks[k].link == "logit" else eta

    def delta_of_theta(x, theta):
        x = np.asarray(x, dtype=float).ravel()
        rx = np.concatenate([[1.0], x])
        mu0 = pred("mu_0", theta, rx)
        if method == "survivor_case":
            return pred("mu_1", theta, rx) - mu0
        r1, r0 = np.concatenate([[1.0, 1.0], x]), np.concatenate([[1.0, 0.0], x])
        p1 = est.clip_prob(pred("pi_T", theta, r1))
        p0 = est.clip_prob(pred("pi_T", theta, r0))
        m1, m0 = pred("mu_T", theta, r1), pred("mu_T", theta, r0)
        if method == "proposed" or (method == "rho_adjusted" and not callable(rho) and rho == 1.0):
            return est.csace_proposed(p1, p0, m1, m0, mu0)
        if method == "rho_adjusted":
            r = float(rho(x[None, :])) if callable(rho) else float(rho)
            return est.csace_rho_adjusted(p1, p0, m1, m0, mu0, r)
        c1 = est.clip_prob(pred("pi_C_vx", theta, r1))
        c0 = est.clip_prob(pred("pi_C_vx", theta, r0))
        return est.csace_wzr(p1, p0, c1, c0, m1, m0, mu0)

    return theta_hat, score, delta_of_theta


def parametric_csace_se(ds: Dataset, method: str, x, rho=1.0, level: float = 0.95) -> VarianceReport:
    """Sandwich inference for a parametric CSACE at ``x``."""
    theta, score, dfun = parametric_model(ds, method, rho)
    return sandwich_se(ds, theta, score, dfun, x, level)


# ---------------------------------------------------------------------------
# kernel plug-in


def kernel_plugin_variance(nu: est.NuisanceEstimates, ds: Dataset, x, level: float = 0.95) -> VarianceReport:
    """Asymptotic variance of the nonparametric CSACE at ``x``.

    Sums ``w_j(x)^2 * R^q * var_j(x) / (m_j * f_j(x) * |H_j|)`` over the
    outcome regressions ``mu_T(1, .)``, ``mu_T(0, .)`` and ``mu_0``, where
    ``m_j`` is the size of the conditioning cell, ``f_j`` the kernel density of
    ``X`` within it and ``H_j`` its bandwidth matrix. Smoothing-bias terms are
    not estimated; the interval is centred correctly only under undersmoothing.
    """
    if nu.source != "nonparametric":
        raise UsageError("kernel plug-in variance needs nonparametrically fitted nuisances")
    try:
        fits = [nu.fits["mu_T"][1], nu.fits["mu_T"][0], nu.fits["mu_0"]]
    except KeyError:
        raise DataError("mu_T and mu_0 kernel fits are required") from None
    x = np.asarray(x, dtype=float).reshape(1, -1)
    p1, p0 = float(nu.pi_T(1, x)[0]), float(nu.pi_T(0, x)[0])
    w = plugin_weights(p1, p0)
    terms = []
    for wj, f in zip(w, fits):
        mean, cvar = kernel.predict_many(f, x, moments=2)
        dens = float(kernel.density(f.training_x, f.bandwidths, x, f.kernel)[0])
        if not dens > 0:
            raise DegenerateError(f"zero estimated covariate density at x={x.ravel().tolist()}")
        sigma = kernel.ROUGHNESS[f.kernel] ** f.q * float(cvar[0]) / dens
        terms.append(wj ** 2 * sigma / (f.m * f.det_h))
    var = float(sum(terms))
    point = float(est.csace_proposed(p1, p0, nu.mu_T(1, x)[0], nu.mu_T(0, x)[0], nu.mu_0(x)[0]))
    return VarianceReport(
        "kernel_plugin", var, estimate=point, ci=wald_ci(point, np.sqrt(var), level),
        details={"weights": list(map(float, w)), "terms": terms, "bias": "not estimated"},
    )


def plugin_weights(pi_T1: float, pi_T0: float) -> tuple:
    """Weights of ``mu_T(1,x)``, ``mu_T(0,x)`` and ``mu_0(x)`` in the CSACE."""
    gap = pi_T1 - pi_T0
    est._check_gap(gap)
    return (pi_T1 * (1 - pi_T0) / gap, -pi_T0 * (1 - pi_T1) / gap, -1.0)


# ---------------------------------------------------------------------------
# closed form, no covariates


def _table_arrays(tbl: est.ContingencyTable, ens: bool):
    if ens:
        p = tbl.ens_cells()
        if p[0] + p[1] <= 0 or p[2] + p[3] <= 0:
            raise DegenerateError("empty survivor margin")
    else:
        p = tbl.cells()
        est._check_table(p)
    return p


def closed_form_avar(p):
    """Asymptotic variance (times n) of the closed-form estimate; arrays allowed."""
    p = np.asarray(p, dtype=float)
    p1, p2, p3, p4, p5, p6, p7, p8 = (p[..., k] for k in range(8))
    V = _v_sum(p)
    D = (p3 + p4) * p5 - (p1 + p2) * p6
    return V / D ** 4 + p7 * p8 / (p7 + p8) ** 3


def _v_sum(p):
    p1, p2, p3, p4, p5, p6 = (p[..., k] for k in range(6))
    V1 = p5 ** 4 * p3 * p4 * (p3 + p4) + p6 ** 4 * p1 * p2 * (p1 + p2)
    V2 = -2 * p5 ** 3 * p6 * p3 * p4 * (p1 + p2) - 2 * p6 ** 3 * p5 * p1 * p2 * (p3 + p4)
    V3 = p5 ** 2 * p6 ** 2 * (p2 * p3 * (p2 + p3) + p1 * p4 * (p1 + p4))
    V4 = p5 * p6 * (p5 + p6) * (p2 * p3 - p1 * p4) ** 2
    return V1 + V2 + V3 + V4


def ens_avar(p):
    p = np.asarray(p, dtype=float)
    a, b, c, d = (p[..., k] for k in range(4))
    return a * b / (a + b) ** 3 + c * d / (c + d) ** 3


def closed_form_bias(p):
    """Leading ``1/n`` bias (times n) of the closed-form estimate.

    The estimate is a degree-zero homogeneous function of the multinomial
    proportions, so the second-order term reduces to
    ``0.5 * sum_j p_j d^2 f / dp_j^2``. Only the treated-arm ratio contributes;
    the control ratio's diagonal terms cancel.
    """
    p = np.asarray(p, dtype=float)
    p1, p2, p3, p4, p5, p6 = (p[..., k] for k in range(6))
    D = (p1 + p2) * p6 - (p3 + p4) * p5
    mu1 = (p1 * p6 - p3 * p5) / D
    # derivatives of numerator and denominator of mu1 with respect to p1..p6
    dn = [p6, 0.0 * p6, -p5, 0.0 * p5, -p3, p1]
    dd = [p6, p6, -p5, -p5, -(p3 + p4), p1 + p2]
    ps = [p1, p2, p3, p4, p5, p6]
    total = 0.0
    for pj, nj, dj in zip(ps, dn, dd):
        total = total + pj * (-2.0 * dj * (nj - mu1 * dj) / D ** 2)
    return 0.5 * total


def closed_form_variance(tbl: est.ContingencyTable, level: float = 0.95, ens: bool = False) -> VarianceReport:
    """Delta-method variance of the no-covariate binary estimator.

    With ``ens=True`` the estimator is the difference of survivor outcome
    rates, whose variance is ``[p111 p110 / p11.^3 + p011 p010 / p01.^3] / n``.
    """
    p = _table_arrays(tbl, ens)
    n = tbl.n
    if ens:
        point = float(est.ens_from_cells(p)[0])
        var = float(ens_avar(p)) / n
        bias = 0.0
    else:
        point = float(est.closed_form_from_cells(p)[0])
        var = float(closed_form_avar(p)) / n
        bias = float(closed_form_bias(p)) / n
    return VarianceReport("closed_form", var, estimate=point, bias_correction=bias,
                          ci=wald_ci(point, np.sqrt(var), level))


def mover_logit_ci(tbl: est.ContingencyTable, level: float = 0.95, ens: bool = False) -> tuple:
    """MOVER interval built from logit-scale intervals for the two arm means.

    Returns ``(lower, upper)``; both lie in ``(-1, 1)``.
    """
    p = _table_arrays(tbl, ens)
    lo, hi = mover_from_cells(p, tbl.n, level, ens)
    return float(lo), float(hi)


def mover_from_cells(p, n, level: float = 0.95, ens: bool = False):
    """Vectorized MOVER bounds for arrays of cell proportions."""
    p = np.asarray(p, dtype=float)
    z = _zcrit(level)
    with np.errstate(divide="ignore", invalid="ignore"):
        if ens:
            delta, mu1, mu0 = est.ens_from_cells(p)
            a, b, c, d = (p[..., k] for k in range(4))
            v1 = (a + b) / (a * b)
            v0 = (c + d) / (c * d)
        else:
            delta, mu1, mu0 = est.closed_form_from_cells(p)
            p1, p2, p3, p4, p5, p6, p7, p8 = (p[..., k] for k in range(8))
            v1 = _v_sum(p) / ((p3 * p5 - p1 * p6) ** 2 * (p4 * p5 - p2 * p6) ** 2)
            v0 = (p7 + p8) / (p7 * p8)
    for m in (mu1, mu0):
        if np.any(~((np.asarray(m) > 0) & (np.asarray(m) < 1))):
            raise DegenerateError("an arm mean estimate is on or outside the boundary of (0, 1)")
    if not np.all(np.isfinite(v1) & np.isfinite(v0)):
        raise DegenerateError("logit-scale variance is not finite; the substitution gap vanishes")
    s1, s0 = np.sqrt(v1 / n), np.sqrt(v0 / n)
    L1, U1 = expit(logit(mu1) - z * s1), expit(logit(mu1) + z * s1)
    L0, U0 = expit(logit(mu0) - z * s0), expit(logit(mu0) + z * s0)
    lower = delta - np.sqrt((L1 - mu1) ** 2 + (U0 - mu0) ** 2)
    upper = delta + np.sqrt((U1 - mu1) ** 2 + (L0 - mu0) ** 2)
    return lower, upper


# ---------------------------------------------------------------------------
# bootstrap

_FRAGILE = (EstimationError, DataError, np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError)


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Generator owned by one replicate; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _one_replicate(args):
    ds, estimator, seed, b = args
    rng = replicate_rng(seed, b)
    idx = rng.integers(0, ds.n, size=ds.n)
    try:
        val = estimator(ds.take(idx))
    except _FRAGILE as exc:
        return b, None, type(exc).__name__
    val = np.asarray(val, dtype=float)
    if not np.isfinite(val).all():
        return b, None, "non_finite"
    return b, val, None


def bootstrap_replicates(ds: Dataset, estimator: Callable, B: int = DEFAULT_B, seed: int = 0, n_jobs: int = 1):
    """Run ``estimator`` on ``B`` resamples.

    Returns
    -------
    values : list
        One entry per replicate index; ``None`` for failures.
    reasons : dict
        Failure counts keyed by exception name.
    """
    if B < 2:
        raise UsageError("the bootstrap needs B >= 2")
    jobs = [(ds, estimator, seed, b) for b in range(B)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(_one_replicate, jobs, chunksize=max(1, B // (4 * n_jobs))))
    else:
        results = [_one_replicate(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    values = [r[1] for r in results]
    reasons: dict = {}
    for r in results:
        if r[2] is not None:
            reasons[r[2]] = reasons.get(r[2], 0) + 1
    return values, reasons


def percentile_ci(values, level: float = 0.95) -> tuple:
    """Percentile interval whose endpoints are order statistics of ``values``."""
    vals = np.sort(np.asarray(values, dtype=float))
    alpha = 1.0 - level
    lo = float(np.quantile(vals, alpha / 2.0, method="inverted_cdf"))
    hi = float(np.quantile(vals, 1.0 - alpha / 2.0, method="inverted_cdf"))
    return (lo, hi, level)


def bootstrap(ds: Dataset, estimator: Callable, B: int = DEFAULT_B, seed: int = 0, level: float = 0.95,
              n_jobs: int = 1) -> VarianceReport:
    """Nonparametric bootstrap of a scalar estimator.

    Each replicate resamples records with replacement and re-runs the whole
    estimator. Replicates that raise an estimation or data error are dropped
    and counted.

    Raises
    ------
    BootstrapError
        Fewer than ``max(2, B/2)`` replicates succeeded.
    """
    values, reasons = bootstrap_replicates(ds, estimator, B, seed, n_jobs)
    ok = np.array([float(v) for v in values if v is not None])
    dropped = B - ok.size
    if ok.size < max(2, B / 2):
        raise BootstrapError(f"only {ok.size} of {B} bootstrap replicates succeeded ({reasons})")
    var = float(np.var(ok, ddof=1))
    return VarianceReport(
        "bootstrap", var, ci=percentile_ci(ok, level), replicates_used=int(ok.size),
        replicates_dropped=int(dropped), details={"failures": reasons, "seed": seed, "B": B},
    )
