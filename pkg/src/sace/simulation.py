"""Data-generating process, benchmark settings and the replication study.

Covariates: ``(X1, X2)`` bivariate normal with means 1, variances 1 and
covariance 0.5; ``X3 ~ Uniform(0, 2)``. Strata: ``S(0) ~ Bernoulli(0.6)`` and
``S(1) = 1`` when ``S(0) = 1``, otherwise ``Bernoulli(0.6)``. Then

* ``V ~ Bernoulli(expit(-1 + b1 S(0) + b2 (S(1) - S(0))))``
* ``Z ~ Bernoulli(expit(-2 + X1 + a1 S(0) + a2 (S(1) - S(0)) + V / 3))``
* with ``lin = -X1 - 2 X2 + 2 X3 + c1 S(0) + c2 (S(1) - S(0))``, continuous
  outcomes ``Y(1) ~ N(lin + 2, 1)``, ``Y(0) ~ N(lin, 1)``; binary outcomes
  ``Y(1) ~ Bernoulli(0.8 expit(lin) + 0.2)``, ``Y(0) ~ Bernoulli(0.8 expit(lin))``.

The true SACE is 2 (continuous) and 0.2 (binary).
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from . import pipeline
from .data import Dataset
from .errors import DataError, EstimationError, UsageError
from .inference import replicate_rng

PRESETS = {
    1: dict(a1=0.0, a2=0.0, b1=3.0, b2=0.0, c1=3.0, c2=0.0),
    2: dict(a1=1.0, a2=0.0, b1=3.0, b2=0.0, c1=3.0, c2=3.0),
    3: dict(a1=1.0, a2=0.0, b1=3.0, b2=0.0, c1=3.0, c2=0.0),
    4: dict(a1=1.0, a2=0.0, b1=2.0, b2=0.0, c1=3.0, c2=0.0),
}
TRUE_SACE = {"continuous": 2.0, "binary": 0.2}
STUDY_METHODS = ("survivor_case", "wzr", "proposed_parametric", "proposed_nonparametric")
COVARIATES = ("x1", "x2", "x3")


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of one simulation study.

    ``setting`` is 1-4 for the presets or ``"custom"``; a preset overrides
    the six outcome, selection and treatment coefficients.
    """

    setting: int | str = "custom"
    a1: float = 0.0
    a2: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    n: int = 3000
    reps: int = 1000
    outcome_kind: str = "continuous"
    seed: int = 0

    def __post_init__(self):
        if self.setting != "custom":
            if self.setting not in PRESETS:
                raise UsageError(f"setting must be 1-4 or 'custom', got {self.setting!r}")
            for k, val in PRESETS[self.setting].items():
                if getattr(self, k) != val:
                    object.__setattr__(self, k, val)
        if self.outcome_kind not in TRUE_SACE:
            raise UsageError(f"outcome_kind must be one of {tuple(TRUE_SACE)}")
        if self.n < 10 or self.reps < 1:
            raise UsageError("n must be at least 10 and reps at least 1")

    @classmethod
    def preset(cls, setting: int, **kw) -> "SimulationConfig":
        return cls(setting=setting, **PRESETS[setting], **kw)

    @property
    def true_sace(self) -> float:
        return TRUE_SACE[self.outcome_kind]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimulatedDataset:
    """Observed data plus the latent quantities used by oracle tests."""

    data: Dataset
    s0: np.ndarray
    s1: np.ndarray
    y1: np.ndarray
    y0: np.ndarray
    true_sace: float


def _draw(cfg: SimulationConfig, n: int, rng: np.random.Generator):
    e1, e2 = rng.standard_normal(n), rng.standard_normal(n)
    x1 = 1.0 + e1
    x2 = 1.0 + 0.5 * e1 + np.sqrt(0.75) * e2
    x3 = rng.uniform(0.0, 2.0, n)
    s0 = rng.binomial(1, 0.6, n)
    s1 = np.where(s0 == 1, 1, rng.binomial(1, 0.6, n))
    v = rng.binomial(1, expit(-1.0 + cfg.b1 * s0 + cfg.b2 * (s1 - s0)))
    z = rng.binomial(1, expit(-2.0 + x1 + cfg.a1 * s0 + cfg.a2 * (s1 - s0) + v / 3.0))
    lin = -x1 - 2.0 * x2 + 2.0 * x3 + cfg.c1 * s0 + cfg.c2 * (s1 - s0)
    if cfg.outcome_kind == "binary":
        y1 = rng.binomial(1, 0.8 * expit(lin) + 0.2).astype(float)
        y0 = rng.binomial(1, 0.8 * expit(lin)).astype(float)
    else:
        y1 = rng.normal(lin + 2.0, 1.0)
        y0 = rng.normal(lin, 1.0)
    X = np.column_stack([x1, x2, x3])
    return X, s0, s1, v, z, y1, y0


def generate(config: SimulationConfig, replicate_index: int = 0, n: int | None = None) -> SimulatedDataset:
    """Draw one dataset; the stream depends only on ``(config.seed, replicate_index)``."""
    rng = replicate_rng(config.seed, replicate_index)
    n = config.n if n is None else n
    X, s0, s1, v, z, y1, y0 = _draw(config, n, rng)
    s = np.where(z == 1, s1, s0)
    y = np.where(z == 1, y1, y0)
    y = np.where(s == 1, y, np.nan)
    ds = Dataset(z, s, y, X, v, outcome_kind=config.outcome_kind, covariate_names=COVARIATES)
    return SimulatedDataset(ds, s0, s1, y1, y0, config.true_sace)


def generate_interventional(config: SimulationConfig, n: int, replicate_index: int = 0,
                            p_treat: float = 0.5) -> Dataset:
    """External randomized data drawn from the would-be-treated population.

    Units are generated from the same process, those assigned ``Z = 1`` are
    kept (so strata given ``(X, V)`` follow the treated population), and
    treatment is then re-randomized with probability ``p_treat``.
    """
    rng = replicate_rng(config.seed + 7919, replicate_index)
    keep = []
    got = 0
    while got < n:
        X, s0, s1, v, z, y1, y0 = _draw(config, 2 * n, rng)
        t = z == 1
        keep.append((X[t], s0[t], s1[t], v[t], y1[t], y0[t]))
        got += int(t.sum())
    X, s0, s1, v, y1, y0 = (np.concatenate(parts)[:n] for parts in zip(*keep))
    zr = rng.binomial(1, p_treat, n)
    s = np.where(zr == 1, s1, s0)
    y = np.where(s == 1, np.where(zr == 1, y1, y0), np.nan)
    return Dataset(zr, s, y, X, v, outcome_kind=config.outcome_kind, covariate_names=COVARIATES)


_PIPELINES = {
    "survivor_case": dict(method="survivor_case", engine="parametric"),
    "wzr": dict(method="wzr", engine="parametric"),
    "proposed_parametric": dict(method="proposed", engine="parametric"),
    "proposed_nonparametric": dict(method="proposed", engine="nonparametric"),
}


@dataclass
class MethodSummary:
    method: str
    avg_bias: float
    mean_abs_bias: float
    sd_bias: float
    sd_abs_bias: float
    n_ok: int
    n_failed: int
    failures: dict = field(default_factory=dict)


@dataclass
class StudyResult:
    """Per-method summaries and replicate-level estimates.

    The standard deviations are across replicates (not estimated standard
    errors of a single fit).
    """

    config: SimulationConfig
    methods: tuple
    true_value: float
    summaries: dict
    replicates: list  # (rep, method, estimate or None, status)

    @property
    def reps_completed(self) -> int:
        return self.config.reps

    def table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "avg_bias", "mean_abs_bias", "sd_bias", "sd_abs_bias", "n_ok", "n_failed", "true_value"])
        for m in self.methods:
            s = self.summaries[m]
            w.writerow([m, _f(s.avg_bias), _f(s.mean_abs_bias), _f(s.sd_bias), _f(s.sd_abs_bias), s.n_ok,
                        s.n_failed, _f(self.true_value)])
        return buf.getvalue()

    def replicates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rep", "method", "estimate", "bias", "status"])
        for rep, m, val, status in self.replicates:
            if val is None:
                w.writerow([rep, m, "", "", status])
            else:
                w.writerow([rep, m, _f(val), _f(val - self.true_value), status])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "true_value": self.true_value,
            "reps": self.config.reps,
            "summaries": {m: asdict(self.summaries[m]) for m in self.methods},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _f(x: float) -> str:
    return repr(float(x))


def run_replicate(config: SimulationConfig, index: int, methods) -> list:
    """Estimates of every method on one generated dataset."""
    sim = generate(config, index)
    out = []
    for m in methods:
        try:
            res = pipeline.point_estimate(sim.data, estimand="SACE", regime="x_indep_g", check=False, **_PIPELINES[m])
            val = float(res.point)
            status = "ok" if np.isfinite(val) else "non_finite"
            out.append((index, m, val if status == "ok" else None, status))
        except (EstimationError, DataError, np.linalg.LinAlgError) as exc:
            out.append((index, m, None, type(exc).__name__))
    return out


def _run_chunk(args):
    config, indices, methods = args
    rows = []
    for i in indices:
        rows.extend(run_replicate(config, i, methods))
    return rows


def run_study(config: SimulationConfig, methods=STUDY_METHODS, n_jobs: int = 1) -> StudyResult:
    """Repeat generation and estimation ``config.reps`` times.

    Results are identical for any ``n_jobs`` because each replicate draws from
    its own stream.

    Raises
    ------
    EstimationError
        When some method fails on every replicate.
    """
    methods = tuple(methods)
    bad = set(methods) - set(STUDY_METHODS)
    if bad:
        raise UsageError(f"unknown study methods {sorted(bad)}; choose from {STUDY_METHODS}")
    idx = list(range(config.reps))
    if n_jobs > 1:
        chunks = [idx[k::n_jobs] for k in range(n_jobs)]
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            rows = [r for part in ex.map(_run_chunk, [(config, c, methods) for c in chunks]) for r in part]
    else:
        rows = _run_chunk((config, idx, methods))
    order = {m: k for k, m in enumerate(methods)}
    rows.sort(key=lambda r: (r[0], order[r[1]]))
    truth = config.true_sace
    summaries = {}
    for m in methods:
        vals = np.array([r[2] for r in rows if r[1] == m and r[2] is not None], dtype=float)
        fails: dict = {}
        for r in rows:
            if r[1] == m and r[2] is None:
                fails[r[3]] = fails.get(r[3], 0) + 1
        if vals.size == 0:
            raise EstimationError(f"method {m} failed on every replicate ({fails})")
        bias = vals - truth
        sd = (lambda a: float(np.std(a, ddof=1)) if a.size > 1 else 0.0)
        summaries[m] = MethodSummary(m, float(bias.mean()), float(np.abs(bias).mean()), sd(bias), sd(np.abs(bias)),
                                     int(vals.size), int(config.reps - vals.size), fails)
    return StudyResult(config, methods, truth, summaries, rows)


def with_overrides(config: SimulationConfig, **kw) -> SimulationConfig:
    return replace(config, **kw)
