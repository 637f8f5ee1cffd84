"""Acceptance suite: one PASS/FAIL line per criterion, printed to the terminal.

Run with ``pytest tests/test_acceptance.py -v``. Reference values for the
simulation criteria are published benchmark numbers; tolerances are fixed
here and never adjusted to the observed results.
"""

import json
import time

import numpy as np
import pytest

from sace import cli
from sace import estimators as est
from sace import inference as inf
from sace import sensitivity as sens
from sace import simulation as sim
from sace.oracle import oracle_nuisances

SEED = 20240
NONDIFFERENTIAL = ("nd_K4_q2", "nd_K3_q1", "nd_K5_q3", "weak_s_K4", "weak_s_K3_binary", "xg_K4", "ens_K4",
                   "ens_K3", "single_x_553")
RHO_POPULATIONS = ("rho2_K4", "rho2_weak_K3")
WEAK_S = ("weak_s_K4", "weak_s_K3_binary", "ens_K4", "ens_K3", "rho2_weak_K3")
ENS = ("ens_K4", "ens_K3")
CELL_KEYS = [(0, 1, 1, 1), (0, 1, 1, 0), (1, 1, 1, 1), (1, 1, 1, 0), (0, 1, 0, None), (1, 1, 0, None),
             (0, 0, 1, 1), (0, 0, 1, 0), (0, 0, 0, None)]
P_FIXED = np.array([0.10, 0.10, 0.15, 0.05, 0.05, 0.15, 0.20, 0.15, 0.05])


@pytest.fixture
def report(capsys):
    def _report(number: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail
    return _report


def _truth(pop):
    return np.array([pop.delta(k) for k in range(pop.K)])


def test_criterion_01_oracle_identification(populations, report):
    t0 = time.perf_counter()
    errs = []
    for name in NONDIFFERENTIAL:
        pop = populations[name]
        errs.append(np.max(np.abs(est.csace_curve(oracle_nuisances(pop), pop.x, "proposed")[0] - _truth(pop))))
    for name in RHO_POPULATIONS:
        pop = populations[name]
        vals = est.csace_curve(oracle_nuisances(pop), pop.x, "rho_adjusted", pop.rho_star)[0]
        errs.append(np.max(np.abs(vals - _truth(pop))))
    for name in WEAK_S:
        pop = populations[name]
        errs.append(np.max(np.abs(est.csace_curve(oracle_nuisances(pop), pop.x, "wzr")[0] - _truth(pop))))
    elapsed = time.perf_counter() - t0
    worst = float(max(errs))
    ok = len(NONDIFFERENTIAL) >= 5 and worst <= 1e-12 and elapsed < 1.0
    report(1, ok, f"{len(errs)} population checks, max |error| {worst:.2e} (tol 1e-12), {elapsed:.3f}s (< 1s)")


def test_criterion_02_reduction_identities(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    m = 1000
    t1, t0_ = rng.uniform(0.3, 0.95, m), rng.uniform(0.3, 0.95, m)
    # controls strictly below treated survival; cells far enough apart to be admissible
    c1, c0 = t1 * rng.uniform(0.1, 0.8, m), t0_ * rng.uniform(0.1, 0.8, m)
    mu1, mu0, mc = rng.normal(0, 2, m), rng.normal(0, 2, m), rng.normal(0, 2, m)
    keep = (np.abs(t1 - t0_) > 0.05)
    w1, w0 = t1 / (t1 - c1), t0_ / (t0_ - c0)
    keep &= np.abs(w1 - w0) > 0.05
    while keep.sum() < m:  # top up until 1000 admissible inputs are collected
        extra = _extra_inputs(rng, m)
        t1, t0_, c1, c0, mu1, mu0, mc = (np.r_[a[keep], b] for a, b in zip((t1, t0_, c1, c0, mu1, mu0, mc), extra))
        keep = (np.abs(t1 - t0_) > 0.05) & (np.abs(t1 / (t1 - c1) - t0_ / (t0_ - c0)) > 0.05)
    sel = np.flatnonzero(keep)[:m]
    t1, t0_, c1, c0, mu1, mu0, mc = (a[sel] for a in (t1, t0_, c1, c0, mu1, mu0, mc))
    d_rho = np.max(np.abs(est.csace_rho_adjusted(t1, t0_, mu1, mu0, mc, 1.0) - est.csace_proposed(t1, t0_, mu1, mu0, mc)))
    rho = est.wzr_rho(t1, t0_, c1, c0)
    d_wzr = np.max(np.abs(est.csace_rho_adjusted(t1, t0_, mu1, mu0, mc, rho) - est.csace_wzr(t1, t0_, c1, c0, mu1, mu0, mc)))
    elapsed = time.perf_counter() - t0
    ok = d_rho <= 1e-12 and d_wzr <= 1e-12 and elapsed < 1.0 and sel.size == m
    report(2, ok, f"{sel.size} inputs, rho=1 max diff {d_rho:.2e}, WZR substitution max diff {d_wzr:.2e} "
                  f"(tol 1e-12), {elapsed:.3f}s")


def _extra_inputs(rng, m):
    t1, t0 = rng.uniform(0.3, 0.95, m), rng.uniform(0.3, 0.95, m)
    return (t1, t0, t1 * rng.uniform(0.1, 0.8, m), t0 * rng.uniform(0.1, 0.8, m), rng.normal(0, 2, m),
            rng.normal(0, 2, m), rng.normal(0, 2, m))


def test_criterion_03_ens_equivalence(populations, report):
    worst = 0.0
    for name in ENS:
        pop = populations[name]
        nu = oracle_nuisances(pop)
        sc, pr, wz = (est.csace_curve(nu, pop.x, m)[0] for m in ("survivor_case", "proposed", "wzr"))
        worst = max(worst, float(np.max(np.abs(pr - sc))), float(np.max(np.abs(wz - sc))))
    report(3, worst <= 1e-12, f"{len(ENS)} ENS populations, max pairwise |diff| {worst:.2e} (tol 1e-12)")


def test_criterion_04_closed_form_equals_plugin(report):
    rng = np.random.default_rng(SEED)
    worst, done = 0.0, 0
    while done < 1000:
        p = rng.dirichlet(np.full(9, 3.0))
        counts = rng.multinomial(2000, p)
        if (counts == 0).any():
            continue
        tbl = est.ContingencyTable(dict(zip(CELL_KEYS, counts.tolist())), int(counts.sum()))
        pl = est.table_plugins(tbl)
        if abs(pl["pi_T1"] - pl["pi_T0"]) < 0.05:  # keep denominators non-degenerate
            continue
        closed = est.binary_no_covariate(tbl)
        plug = float(est.csace_proposed(pl["pi_T1"], pl["pi_T0"], pl["mu_T1"], pl["mu_T0"], pl["mu_0"]))
        worst = max(worst, abs(closed - plug))
        done += 1
    report(4, worst <= 1e-12, f"{done} tables, max |closed form - plug-in| {worst:.2e} (tol 1e-12)")


def _study(setting, outcome, methods, n=3000, reps=300):
    cfg = sim.SimulationConfig.preset(setting, n=n, reps=reps, seed=SEED, outcome_kind=outcome)
    return sim.run_study(cfg, methods, n_jobs=4).summaries


def test_criterion_05_continuous_table(report):
    t0 = time.perf_counter()
    s1 = _study(1, "continuous", ["survivor_case"])
    s3 = _study(3, "continuous", ["wzr", "proposed_parametric"])
    s2 = _study(2, "continuous", ["proposed_parametric"])
    elapsed = time.perf_counter() - t0
    checks = [
        ("S1 survivor-case", s1["survivor_case"].avg_bias, -1.2707, 0.02),
        ("S3 WZR", s3["wzr"].avg_bias, 0.5926, 0.03),
        ("S3 proposed", s3["proposed_parametric"].avg_bias, 0.0590, 0.03),
    ]
    parts, ok = [], True
    for label, got, target, tol in checks:
        good = abs(got - target) <= tol
        ok &= good
        parts.append(f"{label} {got:+.4f} vs {target:+.4f}±{tol} {'ok' if good else 'off'}")
    s2_bias = s2["proposed_parametric"].avg_bias
    ok &= abs(s2_bias) <= 0.02
    parts.append(f"S2 proposed |{s2_bias:+.4f}| <= 0.02 {'ok' if abs(s2_bias) <= 0.02 else 'off'}")
    report(5, ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_06_binary_table(report):
    t0 = time.perf_counter()
    s1 = _study(1, "binary", ["survivor_case"])
    s3 = _study(3, "binary", ["proposed_parametric"])
    elapsed = time.perf_counter() - t0
    checks = [
        ("S1 survivor-case", s1["survivor_case"].avg_bias, -0.1254, 0.01),
        ("S3 proposed", s3["proposed_parametric"].avg_bias, 0.0068, 0.01),
    ]
    parts, ok = [], True
    for label, got, target, tol in checks:
        good = abs(got - target) <= tol
        ok &= good
        parts.append(f"{label} {got:+.4f} vs {target:+.4f}±{tol} {'ok' if good else 'off'}")
    report(6, ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_07_nonparametric_spot_check(report):
    t0 = time.perf_counter()
    s = _study(3, "continuous", ["proposed_nonparametric"], n=1200, reps=200)["proposed_nonparametric"]
    elapsed = time.perf_counter() - t0
    ok = abs(s.avg_bias) <= 0.08
    report(7, ok, f"S3 nonparametric avg bias {s.avg_bias:+.4f} (|.| <= 0.08), replicate SD {s.sd_bias:.4f}, "
                  f"{s.n_ok} ok / {s.n_failed} failed, {elapsed:.1f}s")


def test_criterion_08_closed_form_calibration(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    n = 2000
    truth = float(est.closed_form_from_cells(P_FIXED)[0])
    draws = rng.multinomial(n, P_FIXED, size=20000) / n
    delta = est.closed_form_from_cells(draws)[0]
    emp_var = float(np.var(np.sqrt(n) * (delta - truth), ddof=1))
    formula = float(inf.closed_form_avar(P_FIXED))
    ratio = emp_var / formula
    cover_draws = rng.multinomial(n, P_FIXED, size=5000) / n
    lo, hi = inf.mover_from_cells(cover_draws, n)
    coverage = float(np.mean((lo <= truth) & (truth <= hi)))
    elapsed = time.perf_counter() - t0
    ok = abs(ratio - 1) <= 0.10 and 0.92 <= coverage <= 0.975 and elapsed < 180
    report(8, ok, f"empirical/closed-form variance {ratio:.4f} (within 10%), MOVER coverage {coverage:.4f} "
                  f"(in [0.92, 0.975]), {elapsed:.1f}s")


def test_criterion_09_sensitivity(populations, report):
    pop = populations["rho2_K4"]
    nu = oracle_nuisances(pop)
    errs = []
    for k in range(pop.K):
        pt = sens.rho_curve(nu, pop.x[k], (0.5, 1.0, pop.rho_star, 4.0), "CSACE")[2]
        errs.append(abs(pt.estimate - pop.delta(k)))
    worst = max(errs)
    cfg = sim.SimulationConfig.preset(1, n=3000, seed=SEED)
    assert cfg.b2 == 0.0
    obs = sim.generate(cfg, 0).data
    inter = sim.generate_interventional(cfg, 3000)
    point, se = sens.rho_external_bootstrap(obs, inter, [1.0, 1.0, 1.0], B=200, seed=SEED)
    ok = worst <= 1e-10 and abs(point - 1.0) <= 3 * se
    report(9, ok, f"sweep at rho*=2 max |error| {worst:.2e} (tol 1e-10); external rho {point:.4f}, "
                  f"bootstrap se {se:.4f}, |rho-1|/se {abs(point - 1) / se:.2f} (<= 3)")


def test_criterion_10_determinism(tmp_path, setting3_data, capsys, report):
    data = tmp_path / "d.csv"
    setting3_data.take(np.arange(1000)).to_csv(data)
    sim_flags = ["simulate", "--setting", "3", "--n", "500", "--reps", "4", "--seed", "3",
                 "--methods", "survivor_case,wzr,proposed_parametric"]
    est_flags = ["estimate", "--data", str(data), "--outcome", "continuous", "--method", "proposed",
                 "--bootstrap", "30", "--seed", "3"]
    codes = []
    for run in ("a", "b"):
        codes.append(cli.main(sim_flags + ["--out", str(tmp_path / f"sim_{run}")]))
        codes.append(cli.main(est_flags + ["--out", str(tmp_path / f"est_{run}.json")]))
    capsys.readouterr()
    same = True
    for name in ("summary.csv", "summary.json", "replicates.csv"):
        same &= (tmp_path / "sim_a" / name).read_bytes() == (tmp_path / "sim_b" / name).read_bytes()
    same &= (tmp_path / "est_a.json").read_bytes() == (tmp_path / "est_b.json").read_bytes()
    json.loads((tmp_path / "est_a.json").read_text())
    ok = same and codes == [0, 0, 0, 0]
    report(10, ok, f"exit codes {codes}; simulate and estimate outputs byte-identical across runs: {same}")
