"""Identification formulas, nuisance fitting and aggregation.

Notation used throughout:

* ``e(x)``, ``e(v, x)``: probability of treatment.
* ``pi_T(v, x)``: survival probability among treated units with ``V = v``.
* ``pi_C(x)``, ``pi_C(v, x)``: survival probability among controls.
* ``mu_T(v, x)``: mean outcome among treated survivors with ``V = v``.
* ``mu_0(x)``, ``mu_1(x)``: mean outcome among control / treated survivors.

Every CSACE formula accepts scalars or numpy arrays and broadcasts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import glm, kernel
from .data import Dataset
from .errors import (
    DataError,
    DegenerateError,
    NotIdentifiableError,
    OrderingError,
    UsageError,
    WeakSubstitutionError,
)

SUBSTITUTION_TOL = 1e-6
PROB_FLOOR = 1e-6
PROB_CEIL = 1.0 - 1e-6

ESTIMANDS = ("CSACE", "SACE", "SACET", "SACEC")
REGIMES = ("general", "weak_s_ign", "x_indep_g")
METHODS = ("survivor_case", "proposed", "rho_adjusted", "wzr", "binary_closed_form", "binary_ens")
ENGINES = ("parametric", "nonparametric")


def clip_prob(p):
    return np.clip(p, PROB_FLOOR, PROB_CEIL)


def _out(val):
    return float(val) if np.ndim(val) == 0 else val


def _check_open_unit(*probs):
    for p in probs:
        a = np.asarray(p, dtype=float)
        if not ((a > 0) & (a < 1)).all():
            raise DataError("probabilities must lie strictly inside (0, 1)")


def _check_gap(gap, tol=SUBSTITUTION_TOL):
    g = np.abs(np.asarray(gap, dtype=float))
    if not (g >= tol).all():
        raise WeakSubstitutionError(float(np.nanmin(g)), tol)


# ---------------------------------------------------------------------------
# pointwise identification formulas


def survivor_contrast(mu_1, mu_0):
    """``E(Y | Z=1, S=1, x) - E(Y | Z=0, S=1, x)``."""
    return _out(np.asarray(mu_1, dtype=float) - np.asarray(mu_0, dtype=float))


def csace_survivor_case(nu: "NuisanceEstimates", x):
    """Survivor-case contrast evaluated from fitted nuisances at ``x``."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    if nu.mu_1_fn is None or nu.mu_0_fn is None:
        raise DataError("survivor-case contrast needs mu_1 and mu_0")
    out = nu.mu_1(X) - nu.mu_0(X)
    return float(out[0]) if np.ndim(x) <= 1 else out


def csace_proposed(pi_T1, pi_T0, mu_T1, mu_T0, mu_0):
    """CSACE under nondifferential substitution with binary ``V``.

    Returns ``[(1-pi_T0) pi_T1 mu_T1 - (1-pi_T1) pi_T0 mu_T0] / (pi_T1 - pi_T0) - mu_0``.

    Raises
    ------
    WeakSubstitutionError
        When ``|pi_T1 - pi_T0| < 1e-6``.
    """
    p1, p0 = np.asarray(pi_T1, dtype=float), np.asarray(pi_T0, dtype=float)
    _check_open_unit(p1, p0)
    gap = p1 - p0
    _check_gap(gap)
    mu1 = ((1.0 - p0) * p1 * np.asarray(mu_T1, dtype=float) - (1.0 - p1) * p0 * np.asarray(mu_T0, dtype=float)) / gap
    return _out(mu1 - np.asarray(mu_0, dtype=float))


def csace_proposed_discrete_v(pi_T: Mapping, mu_T: Mapping, mu_0, h: Mapping):
    """CSACE for a finite-support ``V`` with user weights ``h`` summing to zero.

    Returns ``sum_v o(v) mu_T(v) h(v) / sum_v o(v) h(v) - mu_0`` where
    ``o(v) = pi_T(v) / (1 - pi_T(v))``.
    """
    keys = list(h)
    if set(keys) != set(pi_T) or set(keys) != set(mu_T):
        raise DataError("pi_T, mu_T and h must share the same support")
    hv = np.array([float(h[k]) for k in keys])
    if abs(hv.sum()) > 1e-9 * max(1.0, np.abs(hv).sum()):
        raise DataError(f"weights h must sum to zero, got {hv.sum():.3g}")
    probs = [np.asarray(pi_T[k], dtype=float) for k in keys]
    _check_open_unit(*probs)
    odds = [p / (1.0 - p) for p in probs]
    den = sum(o * w for o, w in zip(odds, hv))
    num = sum(o * np.asarray(mu_T[k], dtype=float) * w for o, k, w in zip(odds, keys, hv))
    d = np.abs(np.asarray(den))
    if not (d >= SUBSTITUTION_TOL).all():
        raise DegenerateError(f"weighted odds denominator {float(np.min(d)):.3g} is numerically zero")
    return _out(num / den - np.asarray(mu_0, dtype=float))


def csace_rho_adjusted(pi_T1, pi_T0, mu_T1, mu_T0, mu_0, rho):
    """CSACE when the LD/DD odds ratio of ``V`` equals ``rho`` instead of one.

    Returns ``[rho (1-pi_T0) pi_T1 mu_T1 - (1-pi_T1) pi_T0 mu_T0] /
    [rho (1-pi_T0) pi_T1 - (1-pi_T1) pi_T0] - mu_0``.
    """
    r = np.asarray(rho, dtype=float)
    if not (r > 0).all():
        raise DataError("rho must be positive")
    p1, p0 = np.asarray(pi_T1, dtype=float), np.asarray(pi_T0, dtype=float)
    _check_open_unit(p1, p0)
    a = r * (1.0 - p0) * p1
    b = (1.0 - p1) * p0
    den = a - b
    _check_gap(den)
    mu1 = (a * np.asarray(mu_T1, dtype=float) - b * np.asarray(mu_T0, dtype=float)) / den
    return _out(mu1 - np.asarray(mu_0, dtype=float))


def wzr_rho(pi_T1, pi_T0, pi_C1, pi_C0):
    """Odds ratio implied by weak S-ignorability and monotonicity."""
    t1, t0 = np.asarray(pi_T1, dtype=float), np.asarray(pi_T0, dtype=float)
    c1, c0 = np.asarray(pi_C1, dtype=float), np.asarray(pi_C0, dtype=float)
    _check_ordering(t1 - c1, t0 - c0)
    return _out(((1.0 - t1) / (t1 - c1)) / ((1.0 - t0) / (t0 - c0)))


def _check_ordering(d1, d0):
    for v, d in ((1, d1), (0, d0)):
        bad = ~(np.asarray(d) > 0)
        if bad.any():
            raise OrderingError(
                f"survival under treatment does not exceed survival under control in the v={v} cell "
                f"(difference {float(np.min(d)):.3g})"
            )


def csace_wzr(pi_T1, pi_T0, pi_C1, pi_C0, mu_T1, mu_T0, mu_0):
    """CSACE with weights ``pi_T / (pi_T - pi_C)`` per level of ``V``.

    Raises
    ------
    OrderingError
        When ``pi_T <= pi_C`` in either cell.
    """
    t1, t0 = np.asarray(pi_T1, dtype=float), np.asarray(pi_T0, dtype=float)
    c1, c0 = np.asarray(pi_C1, dtype=float), np.asarray(pi_C0, dtype=float)
    _check_open_unit(t1, t0, c1, c0)
    _check_ordering(t1 - c1, t0 - c0)
    w1 = t1 / (t1 - c1)
    w0 = t0 / (t0 - c0)
    den = w1 - w0
    d = np.abs(den)
    if not (d >= SUBSTITUTION_TOL).all():
        raise DegenerateError(f"weight difference {float(np.min(d)):.3g} is numerically zero")
    mu1 = (w1 * np.asarray(mu_T1, dtype=float) - w0 * np.asarray(mu_T0, dtype=float)) / den
    return _out(mu1 - np.asarray(mu_0, dtype=float))


# ---------------------------------------------------------------------------
# nuisance functions


@dataclass(frozen=True)
class NuisanceEstimates:
    """Fitted nuisance functions behind one predict interface.

    Probability-valued outputs are clipped to ``[1e-6, 1 - 1e-6]``. Functions
    that could not be fitted are ``None`` and listed as unavailable.

    Attributes
    ----------
    source : {"parametric", "nonparametric", "oracle"}
    fns : dict
        Raw callables keyed by ``e_x``, ``e_vx``, ``pi_C_x``, ``pi_C_vx``,
        ``pi_T``, ``mu_T``, ``mu_0``, ``mu_1``. ``*_x`` and ``mu_0``/``mu_1``
        take ``X``; the others take ``(v, X)``.
    fits : dict
        Underlying GLM or kernel fits, used for inference.
    flags : dict
        Fit-time diagnostics.
    """

    source: str
    fns: dict
    fits: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    PROBS = ("e_x", "e_vx", "pi_C_x", "pi_C_vx", "pi_T")

    @property
    def available(self) -> dict:
        names = ("e_x", "e_vx", "pi_C_x", "pi_C_vx", "pi_T", "mu_T", "mu_0", "mu_1")
        return {k: self.fns.get(k) is not None for k in names}

    def _get(self, name):
        fn = self.fns.get(name)
        if fn is None:
            raise DataError(f"nuisance function {name} is not available")
        return fn

    @property
    def mu_0_fn(self):
        return self.fns.get("mu_0")

    @property
    def mu_1_fn(self):
        return self.fns.get("mu_1")

    def e(self, X, v=None):
        if v is None:
            return clip_prob(self._get("e_x")(_X(X)))
        return clip_prob(self._get("e_vx")(v, _X(X)))

    def pi_C(self, X, v=None):
        if v is None:
            return clip_prob(self._get("pi_C_x")(_X(X)))
        return clip_prob(self._get("pi_C_vx")(v, _X(X)))

    def pi_T(self, v, X):
        return clip_prob(self._get("pi_T")(v, _X(X)))

    def mu_T(self, v, X):
        return self._get("mu_T")(v, _X(X))

    def mu_0(self, X):
        return self._get("mu_0")(_X(X))

    def mu_1(self, X):
        return self._get("mu_1")(_X(X))


def _X(X):
    a = np.asarray(X, dtype=float)
    return a[None, :] if a.ndim == 1 else a


def _bcast_v(v, m):
    return np.broadcast_to(np.asarray(v, dtype=float), (m,))


def _x_design(X):
    return glm.design(X) if X.shape[1] else np.ones((X.shape[0], 1))


def _kernel_by_v(fits: dict):
    def fn(v, X):
        va = _bcast_v(v, X.shape[0])
        out = np.empty(X.shape[0])
        for level in (0, 1):
            m = va == level
            if m.any():
                out[m] = kernel.predict_many(fits[level], X[m])
        if not np.isin(va, (0, 1)).all():
            raise DataError("v must be 0 or 1")
        return out
    return fn


def _kernel_fn(fit):
    def fn(X):
        return kernel.predict_many(fit, X)
    return fn


ALL_TARGETS = ("e_x", "e_vx", "pi_C_x", "pi_C_vx", "pi_T", "mu_T", "mu_0", "mu_1")


def fit_nuisances(ds: Dataset, engine: str = "parametric", targets=None, kernel_name: str = "gaussian",
                  smooth_probabilities: bool = True) -> NuisanceEstimates:
    """Fit nuisance functions on the subsamples that identify them.

    Parameters
    ----------
    ds : Dataset
    engine : {"parametric", "nonparametric"}
        Main-effects GLMs, or Nadaraya-Watson regression with rule-of-thumb
        bandwidths computed per conditioning cell.
    smooth_probabilities : bool
        Under the nonparametric engine, smooth the survival and treatment
        probabilities too. With ``False`` they stay logistic and only the
        outcome means are smoothed; kernel-smoothed probabilities can be
        nearly equal across ``v`` in sparse regions, where the CSACE ratio
        becomes unstable.
    targets : iterable of str, optional
        Subset of ``ALL_TARGETS`` to fit. By default every function the data
        can support is fitted; explicitly requested targets that cannot be
        fitted raise :class:`DataError`.
    """
    if engine not in ENGINES:
        raise UsageError(f"engine must be one of {ENGINES}")
    explicit = targets is not None
    wanted = set(ALL_TARGETS if targets is None else targets)
    unknown = wanted - set(ALL_TARGETS)
    if unknown:
        raise UsageError(f"unknown nuisance targets {sorted(unknown)}")

    z, s, y, v, X = ds.z, ds.s, ds.y, ds.v, ds.x
    t, c = z == 1, z == 0
    binary = ds.outcome_kind == "binary"
    fns, fits, flags = {}, {}, {}

    cells = {
        "e_x": np.ones(ds.n, bool),
        "e_vx": np.ones(ds.n, bool),
        "pi_C_x": c,
        "pi_C_vx": c,
        "pi_T": t,
        "mu_T": t & (s == 1),
        "mu_0": c & (s == 1),
        "mu_1": t & (s == 1),
    }
    response = {"e_x": z, "e_vx": z, "pi_C_x": s, "pi_C_vx": s, "pi_T": s}
    uses_v = {"e_vx", "pi_C_vx", "pi_T", "mu_T"}

    def feasible(name):
        rows = cells[name]
        if not rows.any():
            return f"empty conditioning cell for {name}"
        if name in uses_v:
            if np.isnan(v[rows]).any():
                return f"{name} needs v on every row of its conditioning cell"
            for level in (0, 1):
                if not (rows & (v == level)).any():
                    return f"empty conditioning cell for {name} at v={level}"
        if name in ("e_x", "e_vx") and (t.all() or c.all()):
            return "propensity needs both arms"
        return None

    for name in ALL_TARGETS:
        if name not in wanted:
            continue
        reason = feasible(name)
        if reason:
            if explicit:
                raise DataError(reason)
            fns[name] = None
            flags[f"{name}_unavailable"] = reason
            continue
        rows = cells[name]
        resp = response.get(name)
        is_prob = resp is not None or binary
        yy = (resp[rows] if resp is not None else y[rows]).astype(float)
        if is_prob and yy.min() == yy.max():
            # a logistic fit would diverge; keep the constant and let clipping and the gap check act on it
            flags[f"{name}_degenerate"] = f"response constant at {yy[0]:g} within the conditioning cell"
            fits[name] = None
            fns[name] = _constant_fn(float(yy[0]), name in uses_v)
            continue
        if engine == "parametric" or (is_prob and resp is not None and not smooth_probabilities):
            if name in uses_v:
                D = glm.design(v[rows], X[rows])
            else:
                D = _x_design(X[rows])
            fit = glm.fit_logistic(D, yy) if is_prob else glm.fit_linear(D, yy)
            fits[name] = fit
            if name in uses_v:
                fns[name] = _glm_fn_v(fit)
            else:
                fns[name] = _glm_fn_x(fit)
        else:
            if name in uses_v:
                per = {}
                for level in (0, 1):
                    r = rows & (v == level)
                    per[level] = kernel.fit_nw(X[r], (resp[r] if resp is not None else y[r]).astype(float),
                                               kernel.select_bandwidth(X[r]), kernel_name)
                fits[name] = per
                fns[name] = _kernel_by_v(per)
            else:
                kf = kernel.fit_nw(X[rows], yy, kernel.select_bandwidth(X[rows]), kernel_name)
                fits[name] = kf
                fns[name] = _kernel_fn(kf)
    for name in ALL_TARGETS:
        fns.setdefault(name, None)
    return NuisanceEstimates(engine, fns, fits, flags)


def _constant_fn(value: float, takes_v: bool):
    if takes_v:
        return lambda v, X: np.full(X.shape[0], value)
    return lambda X: np.full(X.shape[0], value)


def _glm_fn_v(fit):
    def fn(v, X):
        return glm.predict(fit, glm.design(_bcast_v(v, X.shape[0]), X))
    return fn


def _glm_fn_x(fit):
    def fn(X):
        return glm.predict(fit, _x_design(X))
    return fn


# ---------------------------------------------------------------------------
# CSACE curves


def csace_curve(nu: NuisanceEstimates, X, method: str, rho=1.0):
    """CSACE at each row of ``X`` for one identification strategy.

    Returns
    -------
    values : ndarray
    diagnostics : dict
    """
    X = _X(X)
    diag: dict = {}
    if method == "survivor_case":
        vals = nu.mu_1(X) - nu.mu_0(X)
        return vals, diag
    p1, p0 = nu.pi_T(1, X), nu.pi_T(0, X)
    diag["min_substitution_gap"] = float(np.min(np.abs(p1 - p0)))
    m1, m0, mu0 = nu.mu_T(1, X), nu.mu_T(0, X), nu.mu_0(X)
    if method == "proposed":
        vals = csace_proposed(p1, p0, m1, m0, mu0)
    elif method == "rho_adjusted":
        r = rho(X) if callable(rho) else rho
        if np.all(np.asarray(r) == 1.0):
            # rho = 1 is exactly the nondifferential case
            vals = csace_proposed(p1, p0, m1, m0, mu0)
        else:
            vals = csace_rho_adjusted(p1, p0, m1, m0, mu0, r)
    elif method == "wzr":
        c1, c0 = nu.pi_C(X, v=1), nu.pi_C(X, v=0)
        vals = csace_wzr(p1, p0, c1, c0, m1, m0, mu0)
    else:
        raise UsageError(f"method {method!r} has no CSACE curve")
    return np.asarray(vals, dtype=float).reshape(X.shape[0]), diag


def method_targets(method: str, estimand: str, regime: str, v_for_all: bool) -> set:
    """Nuisance functions a pipeline needs."""
    need = {"mu_0"}
    if method == "survivor_case":
        need.add("mu_1")
    else:
        need |= {"pi_T", "mu_T"}
    if method == "wzr":
        need.add("pi_C_vx")
    if estimand != "CSACE" and regime != "x_indep_g":
        if v_for_all:
            need |= {"pi_C_vx", "e_vx"}
        else:
            need |= {"pi_C_x", "e_x"}
        if regime == "general" and estimand == "SACET":
            need.add("pi_T")
    return need


# ---------------------------------------------------------------------------
# aggregation


def check_identifiable(estimand: str, regime: str, r=None) -> None:
    """Raise when the estimand is not identified under the regime."""
    if regime != "general" or estimand in ("CSACE", "SACEC"):
        return
    if estimand == "SACE":
        raise NotIdentifiableError(
            "SACE is not identifiable under the general regime; assume weak S-ignorability or X independent of G"
        )
    if r is None:
        raise NotIdentifiableError(
            "SACET is not identifiable under the general regime unless r(x) = pi_DD/pi_LD is supplied"
        )


def aggregate(ds: Dataset, nu: NuisanceEstimates, delta, estimand: str, regime: str, r=None) -> float:
    """Population-level estimand from a CSACE function by empirical averaging.

    Parameters
    ----------
    delta : callable or array_like
        ``X -> CSACE`` or precomputed CSACE values at ``ds.x``.
    estimand : {"SACE", "SACET", "SACEC"}
    regime : {"general", "weak_s_ign", "x_indep_g"}
    r : callable or float, optional
        ``r(x) = pi_DD / pi_LD`` among the treated; required for SACET under
        the general regime.
    """
    vals = delta(ds.x) if callable(delta) else np.asarray(delta, dtype=float)
    return aggregate_arrays(ds.x, ds.v, ds.z, vals, nu, estimand, regime, r=r)


def aggregate_arrays(X, v, z, deltas, nu: NuisanceEstimates, estimand: str, regime: str, r=None, weights=None) -> float:
    """Weighted-average form of :func:`aggregate`.

    The refined ``(v, x)`` weights are used when ``v`` is recorded on every
    row and the matching nuisance functions were fitted; the ``x``-only
    weights otherwise. ``weights`` are optional row probabilities, used for
    exact evaluation over a finite population.
    """
    X = _X(X)
    m = X.shape[0]
    deltas = np.asarray(deltas, dtype=float).reshape(m)
    w0 = np.ones(m) if weights is None else np.asarray(weights, dtype=float)
    if estimand not in ("SACE", "SACET", "SACEC"):
        raise UsageError(f"estimand must be SACE, SACET or SACEC, got {estimand!r}")
    if regime not in REGIMES:
        raise UsageError(f"regime must be one of {REGIMES}, got {regime!r}")
    vv = None if v is None else np.asarray(v, dtype=float).reshape(m)
    avail = nu.available
    refined = vv is not None and not np.isnan(vv).any() and avail["pi_C_vx"] and avail["e_vx"]
    vr = vv if refined else None
    check_identifiable(estimand, regime, r)

    if regime == "x_indep_g":
        w = w0
    elif regime == "weak_s_ign":
        pc = nu.pi_C(X, v=vr)
        if estimand == "SACE":
            w = w0 * pc
        else:
            e = nu.e(X, v=vr)
            w = w0 * pc * (e if estimand == "SACET" else 1.0 - e)
    elif estimand == "SACEC":
        w = w0 * nu.pi_C(X, v=vr) * (1.0 - nu.e(X, v=vr))
    else:
        rv = np.asarray(r(X) if callable(r) else r, dtype=float) * np.ones(m)
        if not (rv > 0).all():
            raise DataError("r(x) must be positive")
        if refined:
            pt = nu.pi_T(vv, X)
            w = w0 * (pt - (1.0 - pt) / rv) * nu.e(X, v=vv)
        else:
            # e(v,x) p(v,x) is proportional to p(v,x | Z=1), so average over treated rows
            if z is None or vv is None:
                raise DataError("SACET under the general regime needs v for the treated rows")
            t = np.asarray(z).reshape(m) == 1
            if np.isnan(vv[t]).any():
                raise DataError("SACET under the general regime needs v for the treated rows")
            w = np.zeros(m)
            pt = nu.pi_T(vv[t], X[t])
            w[t] = w0[t] * (pt - (1.0 - pt) / rv[t])
    total = float(np.sum(w))
    if not abs(total) > 0:
        raise DegenerateError("aggregation weights sum to zero")
    return float(np.sum(w * deltas) / total)


# ---------------------------------------------------------------------------
# results


@dataclass
class EstimateResult:
    """Point estimate with optional uncertainty and diagnostics."""

    estimand: str
    method: str
    point: float
    se: float | None = None
    ci: tuple | None = None
    diagnostics: dict = field(default_factory=dict)
    x: tuple | None = None
    engine: str | None = None
    regime: str | None = None

    def to_dict(self) -> dict:
        d = {
            "estimand": self.estimand,
            "method": self.method,
            "engine": self.engine,
            "regime": self.regime,
            "x": None if self.x is None else list(self.x),
            "point": self.point,
            "se": self.se,
            "ci": None if self.ci is None else {"lower": self.ci[0], "upper": self.ci[1], "level": self.ci[2]},
            "diagnostics": self.diagnostics,
        }
        return d


# ---------------------------------------------------------------------------
# no-covariate binary outcome


ANY = "any"


@dataclass(frozen=True)
class ContingencyTable:
    """Cell counts for a binary outcome without covariates.

    Keys are ``(v, z, s, y)`` with ``v`` in {0, 1, None} and ``y`` in
    {0, 1, None}; ``y`` is ``None`` exactly when ``s == 0``.
    """

    counts: dict
    n: int

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "ContingencyTable":
        if ds.outcome_kind != "binary":
            raise DataError("contingency tables need a binary outcome")
        counts: dict = {}
        for i in range(ds.n):
            vi = None if np.isnan(ds.v[i]) else int(ds.v[i])
            yi = None if np.isnan(ds.y[i]) else int(ds.y[i])
            key = (vi, int(ds.z[i]), int(ds.s[i]), yi)
            counts[key] = counts.get(key, 0) + 1
        return cls(counts, ds.n)

    @classmethod
    def from_proportions(cls, props: Mapping, n: int = 1) -> "ContingencyTable":
        """Table whose counts equal ``n * p``; proportions must sum to one."""
        total = sum(props.values())
        if abs(total - 1.0) > 1e-9:
            raise DataError(f"proportions sum to {total}, not 1")
        return cls({k: n * float(p) for k, p in props.items()}, n)

    def __post_init__(self):
        for (v, z, s, y), cnt in self.counts.items():
            if v not in (0, 1, None) or z not in (0, 1) or s not in (0, 1) or y not in (0, 1, None):
                raise DataError(f"invalid cell {(v, z, s, y)}")
            if (s == 0) != (y is None):
                raise DataError(f"cell {(v, z, s, y)}: y must be undefined exactly when s = 0")
            if cnt < 0:
                raise DataError("negative cell count")

    def prob(self, v=ANY, z=ANY, s=ANY, y=ANY) -> float:
        """Proportion of records matching the pattern; ``ANY`` sums over a position."""
        tot = 0.0
        for (cv, cz, cs, cy), cnt in self.counts.items():
            if (v is ANY or cv == v) and (z is ANY or cz == z) and (s is ANY or cs == s) and (y is ANY or cy == y):
                tot += cnt
        return tot / self.n

    def cells(self) -> np.ndarray:
        """The nine cells entering the closed-form estimator.

        Order: p0111, p0110, p1111, p1110, p010*, p110*, p.011, p.010, p.00*.
        """
        return np.array([
            self.prob(0, 1, 1, 1), self.prob(0, 1, 1, 0),
            self.prob(1, 1, 1, 1), self.prob(1, 1, 1, 0),
            self.prob(0, 1, 0, None), self.prob(1, 1, 0, None),
            self.prob(ANY, 0, 1, 1), self.prob(ANY, 0, 1, 0),
            self.prob(ANY, 0, 0, None),
        ])

    def ens_cells(self) -> np.ndarray:
        """Cells p111, p110, p011, p010 summed over ``v``."""
        return np.array([
            self.prob(ANY, 1, 1, 1), self.prob(ANY, 1, 1, 0),
            self.prob(ANY, 0, 1, 1), self.prob(ANY, 0, 1, 0),
        ])


def closed_form_from_cells(p):
    """Closed-form estimate from the nine cell proportions (last axis).

    Works on arrays of tables; returns ``(delta, mu1, mu0)``.
    """
    p = np.asarray(p, dtype=float)
    p1, p2, p3, p4, p5, p6, p7, p8 = (p[..., k] for k in range(8))
    den = (p1 + p2) * p6 - (p3 + p4) * p5
    mu1 = (p1 * p6 - p3 * p5) / den
    mu0 = p7 / (p7 + p8)
    return mu1 - mu0, mu1, mu0


def ens_from_cells(p):
    p = np.asarray(p, dtype=float)
    a, b, c, d = (p[..., k] for k in range(4))
    mu1 = a / (a + b)
    mu0 = c / (c + d)
    return mu1 - mu0, mu1, mu0


def _check_table(p):
    p1, p2, p3, p4, p5, p6, p7, p8 = p[:8]
    if p7 + p8 <= 0:
        raise DegenerateError("no control survivors: mu_0 is undefined")
    t0, t1 = p1 + p2 + p5, p3 + p4 + p6
    if t0 <= 0 or t1 <= 0:
        raise DegenerateError("a treated v-cell is empty")
    if p1 + p2 <= 0 or p3 + p4 <= 0:
        raise DegenerateError("no treated survivors in some v-cell")
    gap = ((p3 + p4) * p5 - (p1 + p2) * p6) / (t0 * t1)
    _check_gap(gap)


def binary_no_covariate(tbl: ContingencyTable) -> float:
    """Closed-form CSACE estimate for a binary outcome and binary ``V``."""
    p = tbl.cells()
    _check_table(p)
    return float(closed_form_from_cells(p)[0])


def binary_no_covariate_ens(tbl: ContingencyTable) -> float:
    """Difference in survivor outcome rates, valid under explainable nonrandom survival."""
    p = tbl.ens_cells()
    if p[0] + p[1] <= 0 or p[2] + p[3] <= 0:
        raise DegenerateError("empty survivor margin")
    return float(ens_from_cells(p)[0])


def table_plugins(tbl: ContingencyTable) -> dict:
    """Empirical ``pi_T(v)``, ``mu_T(v)`` and ``mu_0`` of a table."""
    out = {}
    for v in (0, 1):
        surv = tbl.prob(v, 1, 1, ANY)
        dead = tbl.prob(v, 1, 0, None)
        out[f"pi_T{v}"] = surv / (surv + dead)
        out[f"mu_T{v}"] = tbl.prob(v, 1, 1, 1) / surv
    out["mu_0"] = tbl.prob(ANY, 0, 1, 1) / tbl.prob(ANY, 0, 1, ANY)
    return out
