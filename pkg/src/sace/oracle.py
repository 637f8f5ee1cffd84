"""Finite populations with known principal strata, evaluated by enumeration.

A population is a table of probabilities over cells ``(k, g, v, z)``:
covariate support point ``k``, principal stratum ``g`` in (LL, LD, DD),
substitutional variable ``v`` and treatment ``z``. Potential-outcome means
are attached per ``(k, g)``: ``y1[k, g]`` for ``g`` in (LL, LD) and
``y0[k]`` for LL. Because the means do not depend on ``v`` or ``z``, latent
ignorability and the exclusion restriction hold by construction.

Every conditional is computed by summing over cells with generic predicates,
independently of the estimator formulas.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .data import Dataset
from .errors import DataError, DegenerateError
from .estimators import NuisanceEstimates

STRATA = ("LL", "LD", "DD")
LL, LD, DD = 0, 1, 2
SURVIVES = {  # (S(1), S(0))
    LL: (1, 1),
    LD: (1, 0),
    DD: (0, 0),
}
ASSUMPTIONS = ("nondifferential", "weak_s_ignorability", "ens", "x_indep_g")


class Cell(NamedTuple):
    k: int
    g: int
    v: int
    z: int

    @property
    def s(self) -> int:
        s1, s0 = SURVIVES[self.g]
        return s1 if self.z == 1 else s0


@dataclass(frozen=True)
class DiscretePopulation:
    """Joint distribution over ``(x, g, v, z)`` plus outcome means.

    Attributes
    ----------
    x : ndarray, shape (K, q)
    joint : ndarray, shape (K, 3, 2, 2)
        ``P(X = x_k, G = g, V = v, Z = z)``.
    y1 : ndarray, shape (K, 3)
        ``E[Y(1) | G = g, X = x_k]``; the DD column is unused.
    y0 : ndarray, shape (K,)
        ``E[Y(0) | G = LL, X = x_k]``.
    enforced : tuple of str
    rho_star : float or None
        Built-in LD/DD odds ratio of ``V`` when one was requested.
    """

    x: np.ndarray
    joint: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    enforced: tuple = ()
    rho_star: float | None = None

    @property
    def K(self) -> int:
        return int(self.x.shape[0])

    def cells(self):
        for k, g, v, z in itertools.product(range(self.K), range(3), range(2), range(2)):
            yield Cell(k, g, v, z)

    def prob(self, event: Callable[[Cell], bool], given: Callable[[Cell], bool] | None = None) -> float:
        """``P(event | given)`` by summation over all cells."""
        num = den = 0.0
        for c in self.cells():
            p = self.joint[c]
            if given is None or given(c):
                den += p
                if event(c):
                    num += p
        if den <= 0:
            raise DegenerateError("conditioning event has probability zero")
        return num / den

    def expect(self, value: Callable[[Cell], float], given: Callable[[Cell], bool]) -> float:
        """``E(value | given)`` by summation over all cells."""
        num = den = 0.0
        for c in self.cells():
            if given(c):
                p = self.joint[c]
                den += p
                if p > 0:
                    num += p * value(c)
        if den <= 0:
            raise DegenerateError("conditioning event has probability zero")
        return num / den

    def observed_y(self, c: Cell) -> float:
        return self.y1[c.k, c.g] if c.z == 1 else self.y0[c.k]

    # ---- truth -----------------------------------------------------------

    def delta(self, k: int, z: int | None = None) -> float:
        """``E[Y(1) - Y(0) | G = LL, X = x_k]``, optionally also given ``Z = z``."""
        return self.expect(
            lambda c: self.y1[c.k, LL] - self.y0[c.k],
            lambda c: c.k == k and c.g == LL and (z is None or c.z == z),
        )

    def sace(self, z: int | None = None) -> float:
        """SACE (``z=None``), SACET (``z=1``) or SACEC (``z=0``)."""
        return self.expect(
            lambda c: self.y1[c.k, LL] - self.y0[c.k],
            lambda c: c.g == LL and (z is None or c.z == z),
        )

    def principal_score(self, g: int, v: int, k: int) -> float:
        """``P(G = g | Z = 1, V = v, X = x_k)``."""
        return self.prob(lambda c: c.g == g, lambda c: c.z == 1 and c.v == v and c.k == k)

    def rho(self, k: int) -> float:
        """LD/DD odds ratio of ``V`` among the treated at ``x_k``."""
        r = [self.principal_score(DD, v, k) / self.principal_score(LD, v, k) for v in (0, 1)]
        return r[1] / r[0]

    def r_ratio(self, k: int, v: int) -> float:
        """``pi_DD(v, x_k) / pi_LD(v, x_k)``."""
        return self.principal_score(DD, v, k) / self.principal_score(LD, v, k)

    def p_x(self) -> np.ndarray:
        return self.joint.sum(axis=(1, 2, 3))

    def p_vx(self) -> np.ndarray:
        """``P(X = x_k, V = v)`` as a (K, 2) array."""
        return self.joint.sum(axis=(1, 3))

    # ---- sampling ----------------------------------------------------------

    def sample(self, n: int, rng: np.random.Generator, outcome_kind: str = "continuous", sd: float = 1.0) -> Dataset:
        """Draw ``n`` records; continuous outcomes are normal around the cell mean."""
        flat = self.joint.ravel()
        idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
        k, g, v, z = np.unravel_index(idx, self.joint.shape)
        s1 = np.where(g == DD, 0, 1)
        s0 = np.where(g == LL, 1, 0)
        s = np.where(z == 1, s1, s0)
        mean = np.where(z == 1, self.y1[k, g], self.y0[k])
        if outcome_kind == "binary":
            y = rng.binomial(1, np.clip(mean, 0.0, 1.0)).astype(float)
        else:
            y = rng.normal(mean, sd)
        y = np.where(s == 1, y, np.nan)
        return Dataset(z, s, y, self.x[k], v, outcome_kind=outcome_kind)


def exact_conditionals(pop: DiscretePopulation, query: str, k: int, v: int | None = None) -> float:
    """Observable conditional at support point ``k``.

    ``query`` is one of ``e``, ``pi_C`` (with or without ``v``), ``pi_T``,
    ``mu_T`` (``v`` required), ``mu_0`` or ``mu_1``.
    """
    at = (lambda c: c.k == k) if v is None else (lambda c: c.k == k and c.v == v)
    if query == "e":
        return pop.prob(lambda c: c.z == 1, at)
    if query == "pi_C":
        return pop.prob(lambda c: c.s == 1, lambda c: at(c) and c.z == 0)
    if query in ("pi_T", "mu_T") and v is None:
        raise DataError(f"{query} needs v")
    if query == "pi_T":
        return pop.prob(lambda c: c.s == 1, lambda c: at(c) and c.z == 1)
    if query == "mu_T":
        return pop.expect(pop.observed_y, lambda c: at(c) and c.z == 1 and c.s == 1)
    if query == "mu_0":
        return pop.expect(pop.observed_y, lambda c: c.k == k and c.z == 0 and c.s == 1)
    if query == "mu_1":
        return pop.expect(pop.observed_y, lambda c: c.k == k and c.z == 1 and c.s == 1)
    raise DataError(f"unknown query {query!r}")


def _lookup(pop: DiscretePopulation, X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty(X.shape[0], dtype=int)
    for i, row in enumerate(X):
        hit = np.flatnonzero(np.all(pop.x == row, axis=1))
        if hit.size == 0:
            raise DataError(f"x={row.tolist()} is not in the population support")
        out[i] = hit[0]
    return out


def oracle_nuisances(pop: DiscretePopulation) -> NuisanceEstimates:
    """Nuisance functions equal to the exact population conditionals."""
    tables = {}
    for name in ("e", "pi_C", "pi_T", "mu_T"):
        tables[name + "_vx"] = np.array([[exact_conditionals(pop, name, k, v) for v in (0, 1)] for k in range(pop.K)])
    for name in ("e", "pi_C", "mu_0", "mu_1"):
        tables[name + "_x"] = np.array([exact_conditionals(pop, name, k) for k in range(pop.K)])

    def by_x(tab):
        return lambda X: tab[_lookup(pop, X)]

    def by_vx(tab):
        def fn(v, X):
            ks = _lookup(pop, X)
            vv = np.broadcast_to(np.asarray(v, dtype=int), ks.shape)
            return tab[ks, vv]
        return fn

    fns = {
        "e_x": by_x(tables["e_x"]),
        "e_vx": by_vx(tables["e_vx"]),
        "pi_C_x": by_x(tables["pi_C_x"]),
        "pi_C_vx": by_vx(tables["pi_C_vx"]),
        "pi_T": by_vx(tables["pi_T_vx"]),
        "mu_T": by_vx(tables["mu_T_vx"]),
        "mu_0": by_x(tables["mu_0_x"]),
        "mu_1": by_x(tables["mu_1_x"]),
    }
    return NuisanceEstimates("oracle", fns, {"tables": tables})


def build_population(spec: dict) -> DiscretePopulation:
    """Construct a population from an explicit specification.

    Parameters
    ----------
    spec : dict
        ``x`` (K x q support), ``p_x`` (K), ``p_strata`` (K x 3 for LL, LD, DD;
        a fourth DL column is accepted only if it is zero), ``p_v1`` (K x 3,
        ``P(V=1 | g, x)``), ``p_z1`` (K x 3 x 2, ``P(Z=1 | g, v, x)``, or K x 2
        when treatment depends on ``(v, x)`` only), ``y1`` (K x 3 or K x 2),
        ``y0`` (K). Optional ``enforce`` (list of names from ``ASSUMPTIONS``)
        and ``rho`` (target LD/DD odds ratio of ``V``, overriding the DD
        column of ``p_v1``).

    Raises
    ------
    DataError
        Negative or non-normalized probabilities, or DL mass.
    """
    x = np.asarray(spec["x"], dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    K = x.shape[0]
    p_x = np.asarray(spec["p_x"], dtype=float)
    strata = np.asarray(spec["p_strata"], dtype=float).reshape(K, -1)
    if strata.shape[1] == 4:
        if np.any(strata[:, 3] != 0):
            raise DataError("monotonicity forbids mass in the DL stratum")
        strata = strata[:, :3]
    if strata.shape[1] != 3:
        raise DataError("p_strata needs columns LL, LD, DD")
    p_v1 = np.array(spec["p_v1"], dtype=float).reshape(K, 3)
    p_z1 = np.asarray(spec["p_z1"], dtype=float)
    if p_z1.shape == (K, 2):
        p_z1 = np.repeat(p_z1[:, None, :], 3, axis=1)
    p_z1 = np.array(p_z1.reshape(K, 3, 2))
    y1 = np.array(spec["y1"], dtype=float).reshape(K, -1)
    if y1.shape[1] == 2:
        y1 = np.column_stack([y1, np.zeros(K)])
    y0 = np.asarray(spec["y0"], dtype=float).reshape(K)
    enforce = tuple(spec.get("enforce", ()))
    unknown = set(enforce) - set(ASSUMPTIONS)
    if unknown:
        raise DataError(f"unknown assumptions {sorted(unknown)}")
    rho_star = spec.get("rho")

    for name, arr in (("p_x", p_x), ("p_strata", strata), ("p_v1", p_v1), ("p_z1", p_z1)):
        if np.any(arr < 0) or np.any(arr > 1) or not np.isfinite(arr).all():
            raise DataError(f"{name} contains values outside [0, 1]")
    if abs(p_x.sum() - 1) > 1e-12:
        raise DataError("p_x must sum to one")
    if np.any(np.abs(strata.sum(axis=1) - 1) > 1e-12):
        raise DataError("p_strata rows must sum to one")

    if "x_indep_g" in enforce:
        strata = np.repeat(strata[:1], K, axis=0)
    if "weak_s_ignorability" in enforce:
        # treatment may depend on (v, x) only, so S(0) is independent of Z given (V, X)
        p_z1[:, LD, :] = p_z1[:, LL, :]
        p_z1[:, DD, :] = p_z1[:, LL, :]
    if "nondifferential" in enforce or rho_star is not None:
        p_z1[:, DD, :] = p_z1[:, LD, :]
        if rho_star is not None:
            if rho_star <= 0:
                raise DataError("rho must be positive")
            odds = p_v1[:, LD] / (1 - p_v1[:, LD]) * rho_star
            p_v1[:, DD] = odds / (1 + odds)
        else:
            p_v1[:, DD] = p_v1[:, LD]
    if "ens" in enforce:
        y1[:, LD] = y1[:, LL]

    pv = np.stack([1 - p_v1, p_v1], axis=2)  # K, g, v
    pz = np.stack([1 - p_z1, p_z1], axis=3)  # K, g, v, z
    joint = p_x[:, None, None, None] * strata[:, :, None, None] * pv[:, :, :, None] * pz
    return DiscretePopulation(x, joint, y1, y0, enforce, None if rho_star is None else float(rho_star))


def random_spec(rng: np.random.Generator, K: int = 4, q: int = 2, enforce=("nondifferential",),
                rho: float | None = None, binary: bool = False, lo: float = 0.1, hi: float = 0.9) -> dict:
    """Random specification with every probability in ``[lo, hi]``."""
    x = rng.normal(size=(K, q)).round(3)
    p_x = rng.dirichlet(np.ones(K))
    strata = rng.dirichlet(2 * np.ones(3), size=K)
    strata = 0.05 + 0.85 * strata  # keep every stratum present
    strata /= strata.sum(axis=1, keepdims=True)
    spec = {
        "x": x,
        "p_x": p_x,
        "p_strata": strata,
        "p_v1": rng.uniform(lo, hi, size=(K, 3)),
        "p_z1": rng.uniform(lo, hi, size=(K, 3, 2)),
        "y1": rng.uniform(0.1, 0.9, size=(K, 3)) if binary else rng.normal(2, 1, size=(K, 3)),
        "y0": rng.uniform(0.1, 0.9, size=K) if binary else rng.normal(0, 1, size=K),
        "enforce": list(enforce),
    }
    # make V informative about LL versus LD
    spec["p_v1"][:, LL] = np.clip(spec["p_v1"][:, LD] + rng.choice([-1, 1], size=K) * rng.uniform(0.2, 0.4, size=K), 0.05, 0.95)
    if rho is not None:
        spec["rho"] = rho
    return spec
