import numpy as np
import pytest

from sace import estimators as est
from sace import glm, pipeline
from sace import simulation as sim
from sace.data import Dataset
from sace.errors import (
    DataError,
    NotIdentifiableError,
    OrderingError,
    UsageError,
    WeakSubstitutionError,
)


def test_proposed_reference_value():
    # [(1-.3)(.8)(5) - (1-.8)(.3)(2)] / (.8 - .3) - 1 = (2.8 - 0.12) / 0.5 - 1
    assert est.csace_proposed(0.8, 0.3, 5.0, 2.0, 1.0) == pytest.approx(4.36, abs=1e-12)


def test_proposed_constant_mu_t():
    assert est.csace_proposed(0.7, 0.2, 3.0, 3.0, 1.25) == pytest.approx(1.75, abs=1e-12)


def test_weak_substitution_raises():
    with pytest.raises(WeakSubstitutionError) as info:
        est.csace_proposed(0.5, 0.5 + 1e-8, 1.0, 0.0, 0.0)
    assert info.value.gap < 1e-6
    assert info.value.to_dict()["error"] == "weak_substitution"


def test_probabilities_outside_unit_interval():
    with pytest.raises(DataError):
        est.csace_proposed(1.0, 0.3, 1.0, 0.0, 0.0)


def test_rho_adjusted_one_equals_proposed():
    a = est.csace_rho_adjusted(0.8, 0.3, 5.0, 2.0, 1.0, 1.0)
    assert a == pytest.approx(est.csace_proposed(0.8, 0.3, 5.0, 2.0, 1.0), abs=1e-13)


def test_rho_adjusted_value_and_validation():
    # a = 2 * .7 * .8 = 1.12, b = .2 * .3 = .06
    expect = (1.12 * 5 - 0.06 * 2) / (1.12 - 0.06) - 1
    assert est.csace_rho_adjusted(0.8, 0.3, 5.0, 2.0, 1.0, 2.0) == pytest.approx(expect, abs=1e-12)
    with pytest.raises(DataError):
        est.csace_rho_adjusted(0.8, 0.3, 5.0, 2.0, 1.0, 0.0)


def test_wzr_through_rho():
    args = (0.8, 0.3, 0.5, 0.1)
    rho = est.wzr_rho(*args)
    lhs = est.csace_wzr(*args, 5.0, 2.0, 1.0)
    rhs = est.csace_rho_adjusted(0.8, 0.3, 5.0, 2.0, 1.0, rho)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_wzr_ordering_violation():
    with pytest.raises(OrderingError):
        est.csace_wzr(0.3, 0.3, 0.5, 0.1, 1.0, 0.0, 0.0)


def test_discrete_v_binary_case_matches_proposed():
    got = est.csace_proposed_discrete_v({0: 0.3, 1: 0.8}, {0: 2.0, 1: 5.0}, 1.0, {0: -1.0, 1: 1.0})
    assert got == pytest.approx(est.csace_proposed(0.8, 0.3, 5.0, 2.0, 1.0), abs=1e-12)


def test_discrete_v_three_levels_invariant_to_h_scale():
    pi = {0: 0.2, 1: 0.5, 2: 0.9}
    mu = {0: 1.0, 1: 1.0, 2: 1.0}
    # constant mu_T gives mu_T - mu_0 for any admissible h
    assert est.csace_proposed_discrete_v(pi, mu, 0.25, {0: 1, 1: -3, 2: 2}) == pytest.approx(0.75)
    with pytest.raises(DataError):
        est.csace_proposed_discrete_v(pi, mu, 0.0, {0: 1, 1: 1, 2: 1})


def test_survivor_case_contrast():
    assert est.survivor_contrast(3.0, 1.0) == 2.0


def test_parametric_mu0_near_truth(setting3_data):
    nu = est.fit_nuisances(setting3_data, "parametric", targets={"mu_0"})
    fit = nu.fits["mu_0"]
    row = np.array([1.0, 1.0, 1.0, 1.0])
    pred = glm.predict(fit, row)
    se = float(np.sqrt(row @ fit.covariance @ row))
    # control survivors are always-survivors with mean lin + c1 = -1 - 2 + 2 + 3 at x = (1, 1, 1)
    assert abs(pred - 2.0) < 3 * se


def test_all_treated_survive_is_flagged(rng):
    n = 400
    z = rng.binomial(1, 0.5, n)
    v = rng.binomial(1, 0.5, n)
    s = np.where(z == 1, 1, rng.binomial(1, 0.5, n))
    y = np.where(s == 1, rng.normal(size=n), np.nan)
    ds = Dataset(z, s, y, rng.normal(size=(n, 1)), v)
    nu = est.fit_nuisances(ds, "parametric", targets={"pi_T", "mu_T", "mu_0"})
    assert "pi_T_degenerate" in nu.flags
    assert np.all(nu.pi_T(1, ds.x) > 0.999)
    with pytest.raises(WeakSubstitutionError):
        est.csace_curve(nu, ds.x, "proposed")


def test_nonparametric_constant_outcome(rng):
    n = 300
    z, v = rng.binomial(1, 0.5, n), rng.binomial(1, 0.5, n)
    s = rng.binomial(1, 0.6, n)
    y = np.where(s == 1, 4.0, np.nan)
    ds = Dataset(z, s, y, rng.normal(size=(n, 2)), v)
    nu = est.fit_nuisances(ds, "nonparametric", targets={"mu_T", "mu_0", "mu_1"})
    q = rng.normal(size=(10, 2))
    for vals in (nu.mu_T(1, q), nu.mu_T(0, q), nu.mu_0(q), nu.mu_1(q)):
        np.testing.assert_allclose(vals, 4.0)


def test_unavailable_nuisances_flagged(setting3_data):
    nu = est.fit_nuisances(setting3_data.without_v(0))
    assert "pi_C_vx_unavailable" in nu.flags and not nu.available["pi_C_vx"]
    with pytest.raises(DataError):
        est.fit_nuisances(setting3_data.without_v(0), targets={"pi_C_vx"})


def test_engine_validation(setting3_data):
    with pytest.raises(UsageError):
        est.fit_nuisances(setting3_data, "magic")


@pytest.mark.parametrize("estimand", ["SACE", "SACET"])
def test_general_regime_identifiability(estimand):
    with pytest.raises(NotIdentifiableError):
        est.check_identifiable(estimand, "general", None)
    est.check_identifiable("SACEC", "general", None)
    est.check_identifiable("SACET", "general", 0.5)


def test_x_indep_g_aggregation_is_mean(setting3_data):
    res = pipeline.point_estimate(setting3_data, "proposed", "SACE")
    nu = est.fit_nuisances(setting3_data, targets={"pi_T", "mu_T", "mu_0"})
    vals, _ = est.csace_curve(nu, setting3_data.x, "proposed")
    assert res.point == pytest.approx(vals.mean(), abs=1e-12)


def test_weak_s_sace_weights(setting3_data):
    nu = est.fit_nuisances(setting3_data)
    vals, _ = est.csace_curve(nu, setting3_data.x, "proposed")
    pc = nu.pi_C(setting3_data.x, v=setting3_data.v)
    expect = np.sum(vals * pc) / np.sum(pc)
    got = est.aggregate(setting3_data, nu, vals, "SACE", "weak_s_ign")
    assert got == pytest.approx(expect, abs=1e-12)


def test_sacec_general_without_v_uses_x_forms(setting3_data):
    ds = setting3_data.without_v(0)
    nu = est.fit_nuisances(ds)
    vals, _ = est.csace_curve(nu, ds.x, "proposed")
    w = nu.pi_C(ds.x) * (1 - nu.e(ds.x))
    assert est.aggregate(ds, nu, vals, "SACEC", "general") == pytest.approx(np.sum(w * vals) / np.sum(w))


def test_sacet_general_needs_r(setting3_data):
    nu = est.fit_nuisances(setting3_data)
    vals, _ = est.csace_curve(nu, setting3_data.x, "proposed")
    with pytest.raises(NotIdentifiableError):
        est.aggregate(setting3_data, nu, vals, "SACET", "general")
    out = est.aggregate(setting3_data, nu, vals, "SACET", "general", r=0.5)
    assert np.isfinite(out)


def test_pipeline_rho_one_equals_proposed(setting3_data):
    a = pipeline.point_estimate(setting3_data, "proposed", "CSACE", x=[1, 1, 1])
    b = pipeline.point_estimate(setting3_data, "rho_adjusted", "CSACE", x=[1, 1, 1], rho=1.0)
    assert a.point == b.point


def test_binary_out_of_range_diagnostic(setting3_binary):
    res = pipeline.point_estimate(setting3_binary, "proposed", "SACE")
    assert -1 <= res.point <= 1
    assert "csace_out_of_range" not in res.diagnostics or res.diagnostics["csace_out_of_range"] >= 0


def test_contingency_table_validation():
    with pytest.raises(DataError):
        est.ContingencyTable({(1, 1, 0, 1): 3}, 3)
    with pytest.raises(DataError):
        est.ContingencyTable.from_proportions({(1, 1, 1, 1): 0.5}, 10)


def test_closed_form_reference():
    p = np.array([0.10, 0.10, 0.15, 0.05, 0.05, 0.15, 0.20, 0.15, 0.05])
    delta, mu1, mu0 = est.closed_form_from_cells(p)
    # mu1 = (.1*.15 - .15*.05) / ((.2)(.15) - (.2)(.05)) = .0075 / .02
    assert mu1 == pytest.approx(0.375, abs=1e-14)
    assert mu0 == pytest.approx(0.2 / 0.35, abs=1e-14)


def test_closed_form_equals_plugin_on_table():
    keys = [(0, 1, 1, 1), (0, 1, 1, 0), (1, 1, 1, 1), (1, 1, 1, 0), (0, 1, 0, None), (1, 1, 0, None),
            (0, 0, 1, 1), (1, 0, 1, 0), (0, 0, 0, None)]
    probs = [0.10, 0.10, 0.15, 0.05, 0.05, 0.15, 0.20, 0.15, 0.05]
    tbl = est.ContingencyTable.from_proportions(dict(zip(keys, probs)), 1000)
    pl = est.table_plugins(tbl)
    ref = est.csace_proposed(pl["pi_T1"], pl["pi_T0"], pl["mu_T1"], pl["mu_T0"], pl["mu_0"])
    assert est.binary_no_covariate(tbl) == pytest.approx(ref, abs=1e-12)


def test_ens_equals_survivor_rates(setting3_binary):
    tbl = est.ContingencyTable.from_dataset(setting3_binary)
    ds = setting3_binary
    t = (ds.z == 1) & (ds.s == 1)
    c = (ds.z == 0) & (ds.s == 1)
    assert est.binary_no_covariate_ens(tbl) == pytest.approx(ds.y[t].mean() - ds.y[c].mean(), abs=1e-12)


def test_nonparametric_probability_option(setting3_data):
    nu = est.fit_nuisances(setting3_data, "nonparametric", targets={"pi_T"}, smooth_probabilities=False)
    assert nu.fits["pi_T"].link == "logit"
    nu2 = est.fit_nuisances(setting3_data, "nonparametric", targets={"pi_T"})
    assert isinstance(nu2.fits["pi_T"], dict)


def test_nuisance_probabilities_clipped():
    nu = est.NuisanceEstimates("oracle", {"pi_T": lambda v, X: np.full(len(X), 1.0)})
    assert np.all(nu.pi_T(1, np.zeros((3, 1))) == est.PROB_CEIL)


def test_simulated_truth_attached():
    s = sim.generate(sim.SimulationConfig.preset(1, n=200, reps=1), 0)
    assert s.true_sace == 2.0
