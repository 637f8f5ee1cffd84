"""Sensitivity sweeps over the substitution odds ratio and the monotonicity ratio.

Both sweeps treat the parameter as a constant over ``x``. The kappa sweep
replaces the control-survivor mean by

    mu_0(x; kappa) = [kappa * m_1(x) - m_0(x)] / (kappa - 1),

with ``m_v(x) = E(Y | Z=0, S=1, V=v, X=x)``. It presumes that ``V`` has no
direct effect on the control-arm outcome of the harmed stratum, the same way
the exclusion restriction is used elsewhere.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from . import estimators as est
from . import glm, kernel
from . import inference as inf
from .data import Dataset
from .errors import DataError, EstimationError, OrderingError, UsageError

DEFAULT_RHO_GRID = tuple(float(t) for t in np.exp(np.linspace(-1.0, 1.0, 21)))
DEFAULT_KAPPA_GRID = tuple(math.exp(t) for t in (-1.0, -0.5, 0.5, 1.0))
_SOFT = (EstimationError, DataError, np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError)


@dataclass
class SweepPoint:
    rho: float
    estimate: float | None
    ci_low: float | None = None
    ci_high: float | None = None
    status: str = "ok"
    kappa: float | None = None


@dataclass
class SensitivityGrid:
    """Results of a sweep, one entry per grid point (or per (kappa, rho) pair)."""

    parameter: str  # rho, kappa or rho_by_kappa
    rho_grid: tuple
    kappa_grid: tuple = ()
    points: list = field(default_factory=list)
    estimand: str = "SACE"

    def values(self, kappa: float | None = None) -> np.ndarray:
        """Estimates along the rho grid (nan at failed points)."""
        sel = [p for p in self.points if p.kappa == kappa]
        return np.array([np.nan if p.estimate is None else p.estimate for p in sel])

    def at(self, rho: float, kappa: float | None = None) -> SweepPoint:
        for p in self.points:
            if p.rho == rho and p.kappa == kappa:
                return p
        raise KeyError((rho, kappa))

    @property
    def n_ok(self) -> int:
        return sum(p.status == "ok" for p in self.points)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["parameter", "kappa", "rho", "estimate", "ci_low", "ci_high", "status"])
        for p in self.points:
            w.writerow([self.parameter, _fmt(p.kappa), _fmt(p.rho), _fmt(p.estimate), _fmt(p.ci_low),
                        _fmt(p.ci_high), p.status])
        return buf.getvalue()


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _check_grid(grid, name: str) -> tuple:
    g = tuple(float(t) for t in grid)
    if not g:
        raise UsageError(f"{name} grid is empty")
    if any(not (t > 0 and math.isfinite(t)) for t in g):
        raise UsageError(f"{name} grid values must be positive and finite")
    if any(b <= a for a, b in zip(g, g[1:])):
        raise UsageError(f"{name} grid must be strictly increasing")
    return g


def rho_curve(nu: est.NuisanceEstimates, X, grid, estimand: str = "SACE", regime: str = "x_indep_g", v=None,
              z=None, r=None, weights=None, kappa: float | None = None) -> list:
    """Sweep points computed from given nuisance functions.

    ``estimand="CSACE"`` evaluates at the single row of ``X``. ``weights`` are
    row probabilities for exact evaluation over a finite population.
    """
    X = est._X(X)
    out = []
    for rho in grid:
        try:
            vals, _ = est.csace_curve(nu, X, "rho_adjusted", rho)
            if estimand == "CSACE":
                point = float(vals[0])
            else:
                point = est.aggregate_arrays(X, v, z, vals, nu, estimand, regime, r=r, weights=weights)
            if not math.isfinite(point):
                raise EstimationError("non-finite estimate")
            out.append(SweepPoint(rho, point, kappa=kappa))
        except _SOFT as exc:
            out.append(SweepPoint(rho, None, status=type(exc).__name__, kappa=kappa))
    return out


def _targets(ds: Dataset, estimand: str, regime: str) -> set:
    return est.method_targets("rho_adjusted", estimand, regime, ds.v_available_for_controls)


def rho_sweep(ds: Dataset, grid=DEFAULT_RHO_GRID, ci: bool = False, B: int = 200, seed: int = 0,
              estimand: str = "SACE", regime: str = "x_indep_g", engine: str = "parametric", x=None, r=None,
              level: float = 0.95, kernel_name: str = "gaussian", n_jobs: int = 1) -> SensitivityGrid:
    """Re-estimate the target at each constant odds ratio in ``grid``.

    At ``rho = 1`` the value equals the plain proposed estimate. With
    ``ci=True`` each point gets a percentile bootstrap interval; every point
    uses the same resampling streams.
    """
    grid = _check_grid(grid, "rho")
    if estimand == "CSACE" and x is None:
        raise UsageError("the CSACE needs an evaluation point x")
    est.check_identifiable(estimand, regime, r)
    nu = est.fit_nuisances(ds, engine, targets=_targets(ds, estimand, regime), kernel_name=kernel_name)
    X = ds.x if estimand != "CSACE" else np.asarray(x, dtype=float).reshape(1, ds.q)
    points = rho_curve(nu, X, grid, estimand, regime, v=ds.v, z=ds.z, r=r)
    if ci:
        from .pipeline import _replicate_point

        for p in points:
            if p.status != "ok":
                continue
            stat = partial(_replicate_point, method="rho_adjusted", estimand=estimand, engine=engine,
                           regime=regime, x=x, rho=p.rho, r=r, kernel_name=kernel_name)
            try:
                vr = inf.bootstrap(ds, stat, B, seed, level, n_jobs)
                p.ci_low, p.ci_high = vr.ci[0], vr.ci[1]
            except _SOFT as exc:
                p.status = f"ci_failed:{type(exc).__name__}"
    return SensitivityGrid("rho", grid, (), points, estimand)


def kappa_mu_0(m_1, m_0, kappa: float):
    """Control-survivor mean under a monotonicity ratio ``kappa`` (not 1)."""
    if kappa == 1.0:
        raise UsageError("kappa = 1 is excluded: the adjustment is undefined there")
    return (kappa * np.asarray(m_1, dtype=float) - np.asarray(m_0, dtype=float)) / (kappa - 1.0)


def fit_control_by_v(ds: Dataset, engine: str = "parametric", kernel_name: str = "gaussian"):
    """Fit ``(v, X) -> E(Y | Z=0, S=1, V=v, X)`` on control survivors."""
    if not ds.v_available_for_controls:
        raise DataError("the kappa sweep needs v recorded for every control record")
    rows = (ds.z == 0) & (ds.s == 1)
    for level in (0, 1):
        if not (rows & (ds.v == level)).any():
            raise DataError(f"no control survivors with v={level}")
    y = ds.y[rows]
    if engine == "parametric":
        D = glm.design(ds.v[rows], ds.x[rows])
        fit = glm.fit_logistic(D, y) if ds.outcome_kind == "binary" else glm.fit_linear(D, y)

        def fn(v, X):
            X = est._X(X)
            return glm.predict(fit, glm.design(np.broadcast_to(float(v), (X.shape[0],)), X))
        return fn
    fits = {}
    for level in (0, 1):
        r = rows & (ds.v == level)
        fits[level] = kernel.fit_nw(ds.x[r], ds.y[r], kernel.select_bandwidth(ds.x[r]), kernel_name)

    def fn(v, X):
        return kernel.predict_many(fits[int(v)], est._X(X))
    return fn


def with_kappa(nu: est.NuisanceEstimates, control_by_v, kappa: float) -> est.NuisanceEstimates:
    """Copy of ``nu`` whose ``mu_0`` is the kappa-adjusted control mean."""
    if kappa == 1.0:
        raise UsageError("kappa = 1 is excluded: the adjustment is undefined there")

    def mu_0(X):
        return kappa_mu_0(control_by_v(1, X), control_by_v(0, X), kappa)
    fns = dict(nu.fns)
    fns["mu_0"] = mu_0
    return replace(nu, fns=fns)


def kappa_monotonicity_sweep(ds: Dataset, kappa_grid=DEFAULT_KAPPA_GRID, rho_grid=DEFAULT_RHO_GRID,
                             estimand: str = "SACE", regime: str = "x_indep_g", engine: str = "parametric",
                             x=None, r=None, kernel_name: str = "gaussian") -> SensitivityGrid:
    """Family of rho sweeps, one per monotonicity ratio ``kappa``.

    Raises
    ------
    UsageError
        ``kappa = 1`` appears in the grid.
    DataError
        ``v`` is missing for some control record.
    """
    kappa_grid = _check_grid(kappa_grid, "kappa")
    if 1.0 in kappa_grid:
        raise UsageError("kappa = 1 is excluded from the kappa grid")
    rho_grid = _check_grid(rho_grid, "rho")
    if estimand == "CSACE" and x is None:
        raise UsageError("the CSACE needs an evaluation point x")
    est.check_identifiable(estimand, regime, r)
    control_by_v = fit_control_by_v(ds, engine, kernel_name)
    nu = est.fit_nuisances(ds, engine, targets=_targets(ds, estimand, regime) - {"mu_0"}, kernel_name=kernel_name)
    X = ds.x if estimand != "CSACE" else np.asarray(x, dtype=float).reshape(1, ds.q)
    points = []
    for kappa in kappa_grid:
        points.extend(rho_curve(with_kappa(nu, control_by_v, kappa), X, rho_grid, estimand, regime, v=ds.v,
                                z=ds.z, r=r, kappa=kappa))
    return SensitivityGrid("rho_by_kappa", rho_grid, kappa_grid, points, estimand)


def rho_from_external(obs: Dataset, interventional: Dataset, engine: str = "parametric",
                      kernel_name: str = "gaussian"):
    """Odds ratio function determined by an external randomized study.

    Treated-arm survival ``P(S=1 | Z=1, V, X)`` is fitted on ``obs``; the
    control-arm survival of the would-be-treated population is fitted on the
    control arm of ``interventional``, which needs ``(z, s, v, x)`` only.

    Returns
    -------
    callable
        ``X -> rho(X)``. Raises :class:`OrderingError` where treated survival
        does not exceed control survival in some ``v`` cell.
    """
    if obs.q != interventional.q:
        raise DataError("observational and interventional data must share covariates")
    nu_t = est.fit_nuisances(obs, engine, targets={"pi_T"}, kernel_name=kernel_name)
    nu_c = est.fit_nuisances(interventional, engine, targets={"pi_C_vx"}, kernel_name=kernel_name)

    def rho(X):
        X = est._X(X)
        t1, t0 = nu_t.pi_T(1, X), nu_t.pi_T(0, X)
        c1, c0 = nu_c.pi_C(X, v=1), nu_c.pi_C(X, v=0)
        return rho_from_probabilities(t1, t0, c1, c0)
    return rho


def rho_from_probabilities(t1, t0, c1, c0):
    """Odds ratio from treated survival ``t_v`` and control survival ``c_v``."""
    t1, t0, c1, c0 = (np.asarray(a, dtype=float) for a in (t1, t0, c1, c0))
    d1, d0 = t1 - c1, t0 - c0
    if np.any(d1 <= 0) or np.any(d0 <= 0):
        raise OrderingError("treated survival must exceed control survival in both v cells")
    return ((1.0 - t1) / (1.0 - t0)) * (d0 / d1)


def rho_external_bootstrap(obs: Dataset, interventional: Dataset, x, B: int = 200, seed: int = 0,
                           engine: str = "parametric") -> tuple:
    """Point value and bootstrap standard error of the external odds ratio at ``x``.

    Both datasets are resampled independently within each replicate.
    """
    x = np.asarray(x, dtype=float).reshape(1, obs.q)
    point = float(rho_from_external(obs, interventional, engine)(x)[0])
    vals = []
    for b in range(B):
        rng = inf.replicate_rng(seed, b)
        o = obs.take(rng.integers(0, obs.n, obs.n))
        i = interventional.take(rng.integers(0, interventional.n, interventional.n))
        try:
            vals.append(float(rho_from_external(o, i, engine)(x)[0]))
        except _SOFT:
            continue
    if len(vals) < max(2, B / 2):
        raise EstimationError(f"only {len(vals)} of {B} bootstrap replicates succeeded")
    return point, float(np.std(vals, ddof=1))
