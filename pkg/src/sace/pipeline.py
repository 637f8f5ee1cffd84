"""End-to-end estimation: nuisance fit, CSACE, aggregation and uncertainty."""

from __future__ import annotations

from functools import partial

import numpy as np

from . import estimators as est
from . import inference as inf
from .data import Dataset, validate
from .errors import DataError, UsageError

CURVE_METHODS = ("survivor_case", "proposed", "rho_adjusted", "wzr")
TABLE_METHODS = ("binary_closed_form", "binary_ens")

_ADMISSIBILITY = {
    "survivor_case": "survivor_case",
    "proposed": "proposed",
    "rho_adjusted": "rho_adjusted",
    "wzr": "wzr",
    "binary_closed_form": "binary_closed_form",
    "binary_ens": "binary_ens",
}


def check_admissible(ds: Dataset, method: str) -> None:
    report = validate(ds)
    if not report.admissible[_ADMISSIBILITY[method]]:
        reasons = "; ".join(report.flags) or "data do not support this method"
        raise DataError(f"method {method} is not admissible: {reasons}")


def point_estimate(ds: Dataset, method: str, estimand: str = "SACE", engine: str = "parametric",
                   regime: str = "x_indep_g", x=None, rho=1.0, r=None, kernel_name: str = "gaussian",
                   check: bool = True) -> est.EstimateResult:
    """Point estimate of one estimand by one method.

    Parameters
    ----------
    method : str
        One of ``CURVE_METHODS`` or ``TABLE_METHODS``.
    estimand : {"CSACE", "SACE", "SACET", "SACEC"}
        ``CSACE`` requires ``x``. Table methods ignore covariates and return
        the CSACE of the covariate-free model.
    rho : float or callable
        Odds ratio for ``rho_adjusted``.
    r : float or callable, optional
        ``pi_DD / pi_LD`` for SACET under the general regime.
    """
    if estimand not in est.ESTIMANDS:
        raise UsageError(f"estimand must be one of {est.ESTIMANDS}")
    if method in TABLE_METHODS:
        if check:
            check_admissible(ds, method)
        tbl = est.ContingencyTable.from_dataset(ds)
        val = est.binary_no_covariate(tbl) if method == "binary_closed_form" else est.binary_no_covariate_ens(tbl)
        return est.EstimateResult("CSACE", method, val, diagnostics={}, engine=None, regime=None)
    if method not in CURVE_METHODS:
        raise UsageError(f"unknown method {method!r}")
    if estimand == "CSACE" and x is None:
        raise UsageError("the CSACE needs an evaluation point x")
    est.check_identifiable(estimand, regime, r)
    if check:
        check_admissible(ds, method)
    targets = est.method_targets(method, estimand, regime, ds.v_available_for_controls)
    nu = est.fit_nuisances(ds, engine, targets=targets, kernel_name=kernel_name)
    diag = {k: v for k, v in nu.flags.items()}
    if estimand == "CSACE":
        X = np.asarray(x, dtype=float).reshape(1, ds.q)
        vals, d = est.csace_curve(nu, X, method, rho)
        diag.update(d)
        point = float(vals[0])
    else:
        vals, d = est.csace_curve(nu, ds.x, method, rho)
        diag.update(d)
        point = est.aggregate(ds, nu, vals, estimand, regime, r)
    if ds.outcome_kind == "binary":
        out = int(np.sum((vals < -1) | (vals > 1)))
        if out:
            diag["csace_out_of_range"] = out
    return est.EstimateResult(
        estimand, method, point, diagnostics=diag, engine=engine,
        regime=None if estimand == "CSACE" else regime,
        x=None if x is None else tuple(float(t) for t in np.ravel(x)),
    )


def estimate(ds: Dataset, method: str, estimand: str = "SACE", engine: str = "parametric",
             regime: str = "x_indep_g", x=None, rho=1.0, r=None, bootstrap_b: int | None = None,
             seed: int = 0, level: float = 0.95, kernel_name: str = "gaussian", n_jobs: int = 1) -> est.EstimateResult:
    """Point estimate plus the default uncertainty for the pipeline.

    * Table methods: closed-form variance and MOVER interval.
    * Parametric CSACE: sandwich standard error and Wald interval.
    * Nonparametric CSACE: kernel plug-in standard error and Wald interval.
    * Aggregated estimands: bootstrap when ``bootstrap_b`` is given.

    A bootstrap request always replaces the analytic interval with the
    percentile interval.
    """
    res = point_estimate(ds, method, estimand, engine, regime, x, rho, r, kernel_name)
    if method in TABLE_METHODS:
        tbl = est.ContingencyTable.from_dataset(ds)
        ens = method == "binary_ens"
        vr = inf.closed_form_variance(tbl, level, ens=ens)
        res.se = vr.se
        res.diagnostics["bias_correction"] = vr.bias_correction
        try:
            lo, hi = inf.mover_logit_ci(tbl, level, ens=ens)
            res.ci = (lo, hi, level)
            res.diagnostics["ci_method"] = "mover_logit"
        except est.DegenerateError as exc:
            res.ci = vr.ci
            res.diagnostics["ci_method"] = f"wald ({exc})"
    elif estimand == "CSACE" and not bootstrap_b:
        if engine == "parametric":
            vr = inf.parametric_csace_se(ds, method, x, rho, level)
        else:
            if method not in ("proposed",) and not (method == "rho_adjusted" and not callable(rho) and rho == 1.0):
                raise UsageError("kernel plug-in variance covers the proposed estimator only; use --bootstrap")
            nu = est.fit_nuisances(ds, "nonparametric", targets={"pi_T", "mu_T", "mu_0"}, kernel_name=kernel_name)
            vr = inf.kernel_plugin_variance(nu, ds, x, level)
            res.diagnostics["bias"] = "smoothing bias not estimated"
        res.se = vr.se
        res.ci = vr.ci
        res.diagnostics["se_method"] = vr.method
    if bootstrap_b:
        stat = partial(_replicate_point, method=method, estimand=estimand, engine=engine, regime=regime, x=x,
                       rho=rho, r=r, kernel_name=kernel_name)
        vr = inf.bootstrap(ds, stat, bootstrap_b, seed, level, n_jobs)
        res.se = vr.se
        res.ci = vr.ci
        res.diagnostics["se_method"] = "bootstrap"
        res.diagnostics["bootstrap_used"] = vr.replicates_used
        res.diagnostics["bootstrap_dropped"] = vr.replicates_dropped
        if vr.details.get("failures"):
            res.diagnostics["bootstrap_failures"] = vr.details["failures"]
    return res


def _replicate_point(ds: Dataset, **kwargs) -> float:
    return point_estimate(ds, check=False, **kwargs).point
