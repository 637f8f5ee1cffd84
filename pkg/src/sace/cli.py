"""Command-line front end: ``sace {estimate,simulate,sensitivity,check}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 estimation error.
Errors are written to stderr as one JSON object. Primary outputs carry a
metadata header (version, command, flags, seed) and no timestamp, so equal
inputs give byte-identical files; the run time goes to a ``.meta.json``
sidecar when ``--out`` is used.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, checks, pipeline, sensitivity, simulation
from .data import load_csv
from .errors import SaceError, UsageError

_METHODS = {
    "sc": "survivor_case",
    "proposed": "proposed",
    "rho": "rho_adjusted",
    "wzr": "wzr",
    "binary-nocov": "binary_closed_form",
    "binary-nocov-ens": "binary_ens",
}
_REGIMES = {"general": "general", "weak-s": "weak_s_ign", "x-indep-g": "x_indep_g"}
_ESTIMANDS = {"csace": "CSACE", "sace": "SACE", "sacet": "SACET", "sacec": "SACEC"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _meta(args, command: str) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command", "out", "n_jobs")}
    return {"tool": "sace", "version": __version__, "command": command, "flags": flags, "seed": args.seed}


def _dump_json(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def _csv_with_header(meta: dict, body: str) -> str:
    return f"# {json.dumps(_clean(meta), sort_keys=True)}\n" + body


def _emit(text: str, out: str | None, meta: dict) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    _sidecar(path, meta)


def _sidecar(path: Path, meta: dict) -> None:
    side = dict(meta)
    side["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    Path(str(path) + ".meta.json").write_text(_dump_json(side))


# ---------------------------------------------------------------------------
# commands


def _rho_value(args):
    return 1.0 if args.rho is None else args.rho


def cmd_estimate(args) -> int:
    ds = load_csv(args.data, args.outcome)
    method = _METHODS[args.method]
    estimand = _ESTIMANDS[args.estimand]
    if args.rho is not None and method != "rho_adjusted":
        raise UsageError("--rho applies to --method rho only")
    if args.rho is not None and not args.rho > 0:
        raise UsageError("--rho must be positive")
    x = _floats(args.at) if args.at else None
    if x is not None and len(x) != ds.q:
        raise UsageError(f"--at has {len(x)} values, data have {ds.q} covariates")
    res = pipeline.estimate(
        ds, method, estimand=estimand, engine=args.engine, regime=_REGIMES[args.regime], x=x,
        rho=_rho_value(args), r=args.r_function, bootstrap_b=args.bootstrap, seed=args.seed, level=args.level,
        n_jobs=args.n_jobs,
    )
    meta = _meta(args, "estimate")
    result = res.to_dict()
    _emit(_dump_json({"meta": meta, "result": result}), args.out, meta)
    return 0


def _sim_config(args) -> simulation.SimulationConfig:
    coefs = {k: getattr(args, k) for k in ("a1", "a2", "b1", "b2", "c1", "c2")}
    common = dict(n=args.n, reps=args.reps, outcome_kind=args.outcome, seed=args.seed)
    if args.setting is None:
        missing = [k for k, v in coefs.items() if v is None]
        if missing:
            raise UsageError(f"without --setting all of --a1 ... --c2 are required (missing {missing})")
        return simulation.SimulationConfig(setting="custom", **coefs, **common)
    given = [k for k, v in coefs.items() if v is not None]
    if given:
        raise UsageError(f"--setting fixes the coefficients; drop {given}")
    return simulation.SimulationConfig.preset(args.setting, **common)


def cmd_simulate(args) -> int:
    cfg = _sim_config(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    res = simulation.run_study(cfg, methods, n_jobs=args.n_jobs)
    meta = _meta(args, "simulate")
    if args.out is None:
        sys.stdout.write(_csv_with_header(meta, res.table_csv()))
        return 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(_csv_with_header(meta, res.table_csv()))
    (out / "summary.json").write_text(_dump_json({"meta": meta, "study": res.to_dict()}))
    (out / "replicates.csv").write_text(_csv_with_header(meta, res.replicates_csv()))
    _sidecar(out / "summary.csv", meta)
    return 0


def cmd_sensitivity(args) -> int:
    ds = load_csv(args.data, args.outcome)
    if args.rho_grid:
        rho_grid = _floats(args.rho_grid)
    else:
        rho_grid = [float(t) for t in np.exp(np.linspace(args.log_rho_min, args.log_rho_max, args.rho_points))]
    x = _floats(args.at) if args.at else None
    estimand = _ESTIMANDS[args.estimand]
    regime = _REGIMES[args.regime]
    if args.param == "rho":
        grid = sensitivity.rho_sweep(ds, rho_grid, ci=args.bootstrap is not None, B=args.bootstrap or 0,
                                     seed=args.seed, estimand=estimand, regime=regime, engine=args.engine, x=x,
                                     r=args.r_function, n_jobs=args.n_jobs)
    else:
        kappa_grid = _floats(args.kappa_grid) if args.kappa_grid else sensitivity.DEFAULT_KAPPA_GRID
        grid = sensitivity.kappa_monotonicity_sweep(ds, kappa_grid, rho_grid, estimand=estimand, regime=regime,
                                                    engine=args.engine, x=x, r=args.r_function)
    meta = _meta(args, "sensitivity")
    _emit(_csv_with_header(meta, grid.to_csv()), args.out, meta)
    if grid.n_ok == 0:
        _error({"error": "estimation_error", "message": "every grid point failed"}, 4)
        return 4
    return 0


def cmd_check(args) -> int:
    ds = load_csv(args.data, args.outcome)
    points = None
    if args.at:
        points = [_floats(p) for p in args.at.split(";") if p.strip()]
    report = checks.run_all(ds, points)
    meta = _meta(args, "check")
    _emit(_dump_json({"meta": meta, "report": report}), args.out, meta)
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p, data: bool = True):
    if data:
        p.add_argument("--data", required=True, help="input CSV with columns z, s, y, optional v, covariates")
        p.add_argument("--outcome", required=True, choices=("continuous", "binary"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output path (directory for simulate); stdout when omitted")
    p.add_argument("--n-jobs", type=int, default=1)


def _add_estimation(p):
    p.add_argument("--estimand", choices=tuple(_ESTIMANDS), default="sace")
    p.add_argument("--at", default=None, help="evaluation point x1,...,xq for the CSACE")
    p.add_argument("--engine", choices=("parametric", "nonparametric"), default="parametric")
    p.add_argument("--regime", choices=tuple(_REGIMES), default="x-indep-g")
    p.add_argument("--r-function", type=float, default=None,
                   help="constant r = pi_DD / pi_LD among the treated (SACET, general regime)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sace", description="Survivor average causal effects with a substitutional variable.")
    parser.add_argument("--version", action="version", version=f"sace {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="point estimate, standard error and interval")
    _add_common(p)
    p.add_argument("--method", required=True, choices=tuple(_METHODS))
    _add_estimation(p)
    p.add_argument("--rho", type=float, default=None, help="odds ratio for --method rho")
    p.add_argument("--bootstrap", type=int, default=None, metavar="B")
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="replication study on the built-in data-generating process")
    _add_common(p, data=False)
    p.add_argument("--setting", type=int, choices=(1, 2, 3, 4), default=None)
    for k in ("a1", "a2", "b1", "b2", "c1", "c2"):
        p.add_argument(f"--{k}", type=float, default=None)
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--outcome", choices=("continuous", "binary"), default="continuous")
    p.add_argument("--methods", default=",".join(simulation.STUDY_METHODS))
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sensitivity", help="rho and kappa sweeps")
    _add_common(p)
    _add_estimation(p)
    p.add_argument("--param", choices=("rho", "kappa"), default="rho")
    p.add_argument("--rho-grid", default=None, help="explicit comma-separated rho values")
    p.add_argument("--log-rho-min", type=float, default=-1.0)
    p.add_argument("--log-rho-max", type=float, default=1.0)
    p.add_argument("--rho-points", type=int, default=21)
    p.add_argument("--kappa-grid", default=None)
    p.add_argument("--bootstrap", type=int, default=None, metavar="B", help="percentile CI per rho point")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("check", help="assumption diagnostics")
    _add_common(p)
    p.add_argument("--at", default=None, help="evaluation points for positivity, 'x1,x2;x1,x2'")
    p.set_defaults(func=cmd_check)
    return parser


def _error(doc: dict, code: int) -> None:
    doc = dict(doc)
    doc["exit_code"] = code
    sys.stderr.write(json.dumps(_clean(doc), sort_keys=True) + "\n")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except SaceError as exc:
        _error(exc.to_dict(), exc.exit_code)
        return exc.exit_code
    except (OSError, np.linalg.LinAlgError) as exc:
        code = 3 if isinstance(exc, OSError) else 4
        _error({"error": type(exc).__name__, "message": str(exc)}, code)
        return code


if __name__ == "__main__":
    sys.exit(main())
