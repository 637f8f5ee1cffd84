"""Data-driven diagnostics for the identifying assumptions.

Every check returns Wald p-values from main-effects regressions. Small or
large p-values are evidence, not verdicts: monotonicity and the exclusion
restriction cannot be tested from observed data because the principal
stratum is never observed. No decision rule is encoded here.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import glm, kernel
from .data import Dataset, validate
from .errors import DataError, SaceError

CAVEATS = {
    "substitution_relevance": "a small p-value supports that v is associated with survival among the treated",
    "exclusion_restriction": "untestable; large p-values are merely consistent with no direct effect of v",
    "monotonicity_signal": "untestable; a positive significant treatment effect on survival is supportive only",
    "ens": "non-rejection is compatible with equal treated-survivor means across v, licensing the survivor-case "
           "contrast",
    "positivity": "empty or near-empty cells indicate where estimates rely on extrapolation",
}


def _fit(ds: Dataset, rows, response, *columns, binary: bool):
    D = glm.design(*(c[rows] for c in columns), ds.x[rows])
    y = np.asarray(response, dtype=float)[rows]
    return glm.fit_logistic(D, y) if binary else glm.fit_linear(D, y)


def _need_v(ds: Dataset, rows, what: str):
    if np.isnan(ds.v[rows]).any():
        raise DataError(f"{what} needs v on every record of its subsample")
    for level in (0, 1):
        if not (rows & (ds.v == level)).any():
            raise DataError(f"{what} needs records with v={level}")


def check_substitution_relevance(ds: Dataset) -> float:
    """p-value of ``V`` in the logistic regression of ``S`` on ``(V, X)`` among the treated."""
    rows = ds.z == 1
    _need_v(ds, rows, "substitution relevance")
    return glm.wald_test(_fit(ds, rows, ds.s, ds.v, binary=True), 1)


def check_exclusion_restriction(ds: Dataset) -> dict:
    """p-values of ``V`` in outcome regressions among control and treated survivors.

    Returns
    -------
    dict
        ``p_control`` and ``p_treated``; an arm that cannot be checked gets
        ``None`` plus a ``<arm>_reason`` entry.
    """
    binary = ds.outcome_kind == "binary"
    out: dict = {}
    for arm, key in ((0, "control"), (1, "treated")):
        rows = (ds.z == arm) & (ds.s == 1)
        try:
            _need_v(ds, rows, f"{key} exclusion check")
        except DataError as exc:
            out[f"p_{key}"] = None
            out[f"{key}_reason"] = str(exc)
            continue
        out[f"p_{key}"] = glm.wald_test(_fit(ds, rows, ds.y, ds.v, binary=binary), 1)
    if out["p_control"] is None and out["p_treated"] is None:
        raise DataError(f"exclusion check impossible: {out['control_reason']}; {out['treated_reason']}")
    return out


def check_monotonicity_signal(ds: Dataset) -> float:
    """p-value of ``Z`` in the logistic regression of ``S`` on ``(Z, V, X)``.

    ``V`` is dropped from the regression when it is missing for some record.
    """
    if (ds.z == 1).all() or (ds.z == 0).all():
        raise DataError("the monotonicity signal needs both arms")
    rows = np.ones(ds.n, bool)
    cols = (ds.z, ds.v) if ds.has_v and not np.isnan(ds.v).any() else (ds.z,)
    return glm.wald_test(_fit(ds, rows, ds.s, *cols, binary=True), 1)


def test_ens(ds: Dataset) -> float:
    """p-value for equal treated-survivor means across ``v`` given ``X``."""
    rows = (ds.z == 1) & (ds.s == 1)
    _need_v(ds, rows, "the ENS test")
    return glm.wald_test(_fit(ds, rows, ds.y, ds.v, binary=ds.outcome_kind == "binary"), 1)


test_ens.__test__ = False  # not a pytest test despite the name


def _cell(ds: Dataset, rows) -> dict:
    n = int(rows.sum())
    nt = int((rows & (ds.z == 1)).sum())
    out = {
        "n": n,
        "n_treated": nt,
        "n_control": n - nt,
        "pr_treated": (nt / n) if n else None,
        "survivors_treated": int((rows & (ds.z == 1) & (ds.s == 1)).sum()),
        "survivors_control": int((rows & (ds.z == 0) & (ds.s == 1)).sum()),
    }
    flags = []
    if nt == 0:
        flags.append("no treated units")
    if n - nt == 0:
        flags.append("no control units")
    if nt and out["survivors_treated"] == 0:
        flags.append("no treated survivors")
    if n - nt and out["survivors_control"] == 0:
        flags.append("no control survivors")
    out["flags"] = flags
    return out


def check_positivity(ds: Dataset, points=None, max_patterns: int = 50) -> dict:
    """Treatment share and survivor counts per covariate cell.

    With discrete covariates (at most ``max_patterns`` distinct rows) and no
    ``points``, every observed pattern is a cell. Otherwise each requested
    point defines a box whose half-widths are rule-of-thumb bandwidths.
    """
    cells = []
    if ds.q == 0:
        cells.append({"x": [], **_cell(ds, np.ones(ds.n, bool))})
    elif points is None:
        patterns = np.unique(ds.x, axis=0)
        if patterns.shape[0] > max_patterns:
            raise DataError("covariates look continuous; pass evaluation points")
        for row in patterns:
            cells.append({"x": row.tolist(), **_cell(ds, np.all(ds.x == row, axis=1))})
    else:
        h = kernel.select_bandwidth(ds.x)
        for row in np.atleast_2d(np.asarray(points, dtype=float)):
            if row.size != ds.q:
                raise DataError(f"point has {row.size} coordinates, data have {ds.q}")
            rows = np.all(np.abs(ds.x - row) <= h, axis=1)
            cells.append({"x": row.tolist(), "half_width": h.tolist(), **_cell(ds, rows)})
    return {"cells": cells, "flagged": [c["x"] for c in cells if c["flags"]]}


def dichotomize_v(ds: Dataset, candidate, thresholds=None) -> dict:
    """Split a continuous candidate at the threshold with the largest ``|z|`` for survival.

    ``V = 1`` when ``candidate > threshold``. The score is the Wald ``z`` of
    the split indicator in the logistic regression of ``S`` on ``(V, X)``
    among the treated. Because the threshold is chosen by scanning, the
    reported p-value is optimistic.

    Returns
    -------
    dict
        ``threshold``, ``z``, ``p_value_unadjusted``, ``n_scanned``,
        ``warning`` and the recoded ``dataset``.
    """
    c = np.asarray(candidate, dtype=float)
    if c.shape != (ds.n,) or np.isnan(c).any():
        raise DataError("candidate must be a complete vector with one value per record")
    rows = ds.z == 1
    if thresholds is None:
        u = np.unique(c[rows])
        thresholds = (u[:-1] + u[1:]) / 2.0
    best = None
    scanned = 0
    for t in np.asarray(thresholds, dtype=float):
        v = (c > t).astype(float)
        if v[rows].min() == v[rows].max():
            continue
        try:
            zval = glm.wald_z(_fit(ds, rows, ds.s, v, binary=True), 1)
        except SaceError:
            continue
        scanned += 1
        if best is None or abs(zval) > abs(best[1]):
            best = (float(t), zval)
    if best is None:
        raise DataError("no threshold gave an estimable split")
    msg = f"threshold selected by scanning {scanned} splits; the p-value ignores this multiple testing"
    warnings.warn(msg, stacklevel=2)
    t, zval = best
    v = (c > t).astype(float)
    recoded = Dataset(ds.z, ds.s, ds.y, ds.x, v, ds.outcome_kind, ds.covariate_names)
    return {
        "threshold": t,
        "z": zval,
        "p_value_unadjusted": float(math.erfc(abs(zval) / math.sqrt(2.0))),
        "n_scanned": scanned,
        "warning": msg,
        "dataset": recoded,
    }


def run_all(ds: Dataset, points=None) -> dict:
    """Every check the data support, as one JSON-ready document.

    Failures are reported in place of the p-value and never raise.
    """
    report: dict = {"validation": validate(ds).to_dict(), "checks": {}}
    runs = {
        "substitution_relevance": lambda: {"p_value": check_substitution_relevance(ds)},
        "exclusion_restriction": lambda: check_exclusion_restriction(ds),
        "monotonicity_signal": lambda: {"p_value": check_monotonicity_signal(ds)},
        "ens": lambda: {"p_value": test_ens(ds)},
        "positivity": lambda: check_positivity(ds, points),
    }
    for name, fn in runs.items():
        try:
            res = fn()
            res["status"] = "ok"
        except (SaceError, np.linalg.LinAlgError) as exc:
            res = {"status": "error", "error": type(exc).__name__, "message": str(exc)}
        res["caveat"] = CAVEATS[name]
        report["checks"][name] = res
    return report
