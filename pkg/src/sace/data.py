"""Dataset container, CSV ingestion and structural validation.

A record holds a binary treatment ``z``, a binary survival indicator ``s``,
an outcome ``y`` that exists only for survivors, a covariate vector ``x`` and
an optional binary substitutional variable ``v``. Undefined outcomes and absent
``v`` values are stored as ``nan`` in the array view.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

OUTCOME_KINDS = ("continuous", "binary")
RESERVED = ("z", "s", "y", "v")


@dataclass(frozen=True)
class ObservationRecord:
    """One subject.

    Parameters
    ----------
    z, s : int
        Treatment and survival indicators.
    y : float or None
        Outcome; ``None`` encodes "undefined" and must coincide with ``s == 0``.
    x : tuple of float
        Covariates.
    v : int or None
        Substitutional variable, ``None`` when not recorded.
    """

    z: int
    s: int
    y: float | None
    x: tuple[float, ...]
    v: int | None = None


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Dataset:
    """Immutable column store of observation records.

    Parameters
    ----------
    z, s : array_like of {0, 1}
    y : array_like of float
        ``nan`` where the outcome is undefined.
    x : array_like, shape (n, q)
    v : array_like of float, optional
        ``nan`` where the substitutional variable is absent. ``None`` means
        the variable was not recorded for anyone.
    outcome_kind : {"continuous", "binary"}
    covariate_names : sequence of str, optional
    """

    __slots__ = ("z", "s", "y", "x", "v", "outcome_kind", "covariate_names", "_cache")

    def __init__(self, z, s, y, x=None, v=None, outcome_kind="continuous", covariate_names=None):
        if outcome_kind not in OUTCOME_KINDS:
            raise DataError(f"outcome_kind must be one of {OUTCOME_KINDS}, got {outcome_kind!r}")
        z = np.asarray(z, dtype=float).ravel()
        s = np.asarray(s, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        n = z.size
        if x is None:
            x = np.empty((n, 0))
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if s.size != n or y.size != n or x.shape[0] != n:
            raise DataError("z, s, y and x must have the same number of rows")
        if not (np.isin(z, (0, 1)).all() and np.isin(s, (0, 1)).all()):
            raise DataError("z and s must be coded 0/1")
        undefined = np.isnan(y)
        bad = undefined != (s == 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"row {i}: outcome must be defined exactly when s=1")
        if outcome_kind == "binary" and not np.isin(y[~undefined], (0, 1)).all():
            raise DataError("binary outcomes must be coded 0/1")
        if not np.isfinite(x).all():
            raise DataError("covariates must be finite")
        if v is None:
            v = np.full(n, np.nan)
        v = np.asarray(v, dtype=float).ravel()
        if v.size != n:
            raise DataError("v must have one entry per row")
        present = ~np.isnan(v)
        if not np.isin(v[present], (0, 1)).all():
            raise DataError("v must be coded 0/1 where present")
        names = list(covariate_names) if covariate_names is not None else [f"x{j + 1}" for j in range(x.shape[1])]
        if len(names) != x.shape[1]:
            raise DataError("covariate_names length does not match the number of covariates")
        if set(names) & set(RESERVED):
            raise DataError(f"covariate names may not reuse {RESERVED}")
        self.z = _readonly(z.astype(np.int8))
        self.s = _readonly(s.astype(np.int8))
        self.y = _readonly(y.copy())
        self.x = _readonly(np.ascontiguousarray(x))
        self.v = _readonly(v.copy())
        self.outcome_kind = outcome_kind
        self.covariate_names = tuple(names)
        self._cache = {}

    def __setattr__(self, name, value):
        if hasattr(self, "_cache"):
            raise AttributeError("Dataset is immutable")
        object.__setattr__(self, name, value)

    @classmethod
    def from_records(cls, records: Iterable[ObservationRecord], outcome_kind="continuous", covariate_names=None):
        recs = list(records)
        if not recs:
            raise DataError("a dataset needs at least one record")
        q = len(recs[0].x)
        if any(len(r.x) != q for r in recs):
            raise DataError("all records must share the same covariate dimension")
        return cls(
            z=[r.z for r in recs],
            s=[r.s for r in recs],
            y=[np.nan if r.y is None else r.y for r in recs],
            x=np.array([r.x for r in recs], dtype=float).reshape(len(recs), q),
            v=[np.nan if r.v is None else r.v for r in recs],
            outcome_kind=outcome_kind,
            covariate_names=covariate_names,
        )

    @property
    def n(self) -> int:
        return int(self.z.size)

    @property
    def q(self) -> int:
        return int(self.x.shape[1])

    def __len__(self) -> int:
        return self.n

    @property
    def records(self) -> list[ObservationRecord]:
        out = []
        for i in range(self.n):
            y = None if math.isnan(self.y[i]) else float(self.y[i])
            v = None if math.isnan(self.v[i]) else int(self.v[i])
            out.append(ObservationRecord(int(self.z[i]), int(self.s[i]), y, tuple(map(float, self.x[i])), v))
        return out

    @property
    def has_v(self) -> bool:
        """True when at least one record carries ``v``."""
        return bool((~np.isnan(self.v)).any())

    @property
    def v_available_for_controls(self) -> bool:
        """True only if every record carries ``v``."""
        return bool(self.n > 0 and not np.isnan(self.v).any())

    @property
    def v_available_for_treated(self) -> bool:
        t = self.z == 1
        return bool(t.any() and not np.isnan(self.v[t]).any())

    def take(self, idx) -> "Dataset":
        """Rows selected by an integer index array (repeats allowed)."""
        idx = np.asarray(idx)
        return Dataset(
            self.z[idx], self.s[idx], self.y[idx], self.x[idx], self.v[idx],
            outcome_kind=self.outcome_kind, covariate_names=self.covariate_names,
        )

    def without_v(self, arm: int | None = None) -> "Dataset":
        """Copy with ``v`` removed for one arm (or everybody when ``arm`` is None)."""
        v = self.v.copy()
        if arm is None:
            v[:] = np.nan
        else:
            v[self.z == arm] = np.nan
        return Dataset(self.z, self.s, self.y, self.x, v, self.outcome_kind, self.covariate_names)

    def to_csv(self, path, include_v: bool | None = None) -> None:
        """Write the dataset in the CSV schema read by :func:`load_csv`."""
        if include_v is None:
            include_v = self.has_v
        header = ["z", "s", "y"] + (["v"] if include_v else []) + list(self.covariate_names)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(self.n):
                row = [str(int(self.z[i])), str(int(self.s[i])), _fmt_y(self.y[i], self.outcome_kind)]
                if include_v:
                    row.append("" if math.isnan(self.v[i]) else str(int(self.v[i])))
                row.extend(repr(float(t)) for t in self.x[i])
                w.writerow(row)


def _fmt_y(val: float, kind: str) -> str:
    if math.isnan(val):
        return ""
    if kind == "binary":
        return str(int(val))
    return repr(float(val))


def _parse_number(text: str, line: int, col: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"line {line}: column {col!r} is not numeric: {text!r}") from None
    if not math.isfinite(val):
        raise DataError(f"line {line}: column {col!r} is not finite: {text!r}")
    return val


def load_csv(path, outcome_kind: str) -> Dataset:
    """Read a dataset from CSV.

    The header must name ``z``, ``s`` and ``y``; a ``v`` column is optional and
    every other column is a covariate, kept in header order. Empty cells mean
    "undefined" for ``y`` (allowed only when ``s=0``) and "absent" for ``v``
    (allowed only when ``z=0``).

    Raises
    ------
    DataError
        On a malformed row, a ``y``/``s`` mismatch or an invalid ``v``.
    """
    if outcome_kind not in OUTCOME_KINDS:
        raise DataError(f"outcome_kind must be one of {OUTCOME_KINDS}, got {outcome_kind!r}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row expected") from None
        for col in ("z", "s", "y"):
            if col not in header:
                raise DataError(f"{path}: header lacks required column {col!r}")
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names")
        iz, is_, iy = header.index("z"), header.index("s"), header.index("y")
        iv = header.index("v") if "v" in header else None
        cov_idx = [j for j, h in enumerate(header) if h not in RESERVED]
        names = [header[j] for j in cov_idx]
        z, s, y, v, x = [], [], [], [], []
        for k, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"line {k}: expected {len(header)} fields, got {len(row)}")
            row = [c.strip() for c in row]
            zi = _parse_number(row[iz], k, "z")
            si = _parse_number(row[is_], k, "s")
            if zi not in (0, 1) or si not in (0, 1):
                raise DataError(f"line {k}: z and s must be 0 or 1")
            if row[iy] == "":
                if si == 1:
                    raise DataError(f"line {k}: survivor (s=1) with missing outcome")
                yi = np.nan
            else:
                if si == 0:
                    raise DataError(f"line {k}: outcome present for a non-survivor (s=0)")
                yi = _parse_number(row[iy], k, "y")
                if outcome_kind == "binary" and yi not in (0, 1):
                    raise DataError(f"line {k}: binary outcome must be 0 or 1, got {row[iy]!r}")
            vi = np.nan
            if iv is not None:
                if row[iv] == "":
                    if zi == 1:
                        raise DataError(f"line {k}: v may be empty only for controls (z=0)")
                else:
                    vi = _parse_number(row[iv], k, "v")
                    if vi not in (0, 1):
                        raise DataError(f"line {k}: v must be 0 or 1, got {row[iv]!r}")
            z.append(zi)
            s.append(si)
            y.append(yi)
            v.append(vi)
            x.append([_parse_number(row[j], k, header[j]) for j in cov_idx])
    if not z:
        raise DataError(f"{path}: no data rows")
    return Dataset(z, s, y, np.array(x, dtype=float).reshape(len(z), len(cov_idx)), v, outcome_kind, names)


@dataclass
class ValidationReport:
    """Cell counts, covariate summaries and estimator admissibility."""

    n: int
    outcome_kind: str
    counts_zs: dict[str, int]
    counts_vzs: dict[str, int]
    covariate_summary: dict[str, dict[str, float]]
    v_available_for_controls: bool
    admissible: dict[str, bool]
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "outcome_kind": self.outcome_kind,
            "counts_zs": self.counts_zs,
            "counts_vzs": self.counts_vzs,
            "covariate_summary": self.covariate_summary,
            "v_available_for_controls": self.v_available_for_controls,
            "admissible": self.admissible,
            "flags": self.flags,
        }


def validate(ds: Dataset) -> ValidationReport:
    """Summarize cell counts and report which estimators the data can support."""
    counts_zs = {f"{z},{s}": int(((ds.z == z) & (ds.s == s)).sum()) for z in (0, 1) for s in (0, 1)}
    counts_vzs = {}
    for v in (0, 1):
        for z in (0, 1):
            for s in (0, 1):
                counts_vzs[f"{v},{z},{s}"] = int(((ds.v == v) & (ds.z == z) & (ds.s == s)).sum())
    summary = {}
    for j, name in enumerate(ds.covariate_names):
        col = ds.x[:, j]
        summary[name] = {
            "mean": float(col.mean()),
            "sd": float(col.std(ddof=1)) if ds.n > 1 else 0.0,
            "min": float(col.min()),
            "max": float(col.max()),
        }

    flags: list[str] = []
    n11, n01 = counts_zs["1,1"], counts_zs["0,1"]
    if n01 == 0:
        flags.append("mu_0 inestimable: no control survivors (z=0, s=1)")
    if n11 == 0:
        flags.append("mu_T inestimable: no treated survivors (z=1, s=1)")
    if counts_zs["0,0"] + counts_zs["0,1"] == 0:
        flags.append("no control units")
    if counts_zs["1,0"] + counts_zs["1,1"] == 0:
        flags.append("no treated units")

    survivor_ok = n11 > 0 and n01 > 0
    sv_ok = ds.v_available_for_treated and n01 > 0
    if not ds.v_available_for_treated:
        flags.append("v missing for some treated units: substitutional-variable estimators inadmissible")
    else:
        for v in (0, 1):
            if counts_vzs[f"{v},1,1"] == 0:
                sv_ok = False
                flags.append(f"no treated survivors with v={v}: mu_T({v},x) inestimable")
            if counts_vzs[f"{v},1,0"] + counts_vzs[f"{v},1,1"] == 0:
                sv_ok = False
                flags.append(f"no treated units with v={v}: pi_T({v},x) inestimable")
    wzr_ok = sv_ok and ds.v_available_for_controls
    if sv_ok and not ds.v_available_for_controls:
        flags.append("v missing for some controls: WZR estimator inadmissible")
    if wzr_ok:
        for v in (0, 1):
            if counts_vzs[f"{v},0,0"] + counts_vzs[f"{v},0,1"] == 0:
                wzr_ok = False
                flags.append(f"no controls with v={v}: pi_C({v},x) inestimable")
    binary = ds.outcome_kind == "binary"
    admissible = {
        "survivor_case": survivor_ok,
        "proposed": sv_ok,
        "rho_adjusted": sv_ok,
        "wzr": wzr_ok,
        "binary_closed_form": binary and sv_ok,
        "binary_ens": binary and survivor_ok,
    }
    return ValidationReport(
        n=ds.n,
        outcome_kind=ds.outcome_kind,
        counts_zs=counts_zs,
        counts_vzs=counts_vzs,
        covariate_summary=summary,
        v_available_for_controls=ds.v_available_for_controls,
        admissible=admissible,
        flags=flags,
    )


def concat(parts: Sequence[Dataset]) -> Dataset:
    """Stack datasets with identical schema."""
    first = parts[0]
    for p in parts[1:]:
        if p.covariate_names != first.covariate_names or p.outcome_kind != first.outcome_kind:
            raise DataError("datasets must share outcome kind and covariate names")
    return Dataset(
        np.concatenate([p.z for p in parts]),
        np.concatenate([p.s for p in parts]),
        np.concatenate([p.y for p in parts]),
        np.vstack([p.x for p in parts]),
        np.concatenate([p.v for p in parts]),
        first.outcome_kind,
        first.covariate_names,
    )
