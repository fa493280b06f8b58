import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ALPHA, GAMMA, spec_table1, spec_table2
from vaxpair.design import AssignmentDesign, BivariateNormalLaw, CovariatePair, PointLaw
from vaxpair.errors import InputError, NumericError, UndefinedEstimandError
from vaxpair.hazards import BaselineHazard, HazardSpec
from vaxpair.truth import (
    EstimandRequest,
    EstimandValue,
    TruthEngine,
    controlled_outcome,
    estimand,
    initial_cdf,
    natural_outcome,
    observed_risk,
    secondary_attack_parts,
    standardize,
)

ZERO_L = (0.0, 0.0)
NO_CONTAGION = BaselineHazard.constant(0.0)
SINE = BaselineHazard.sinusoidal(0.4, math.pi / 2)
DECAY = BaselineHazard.exp_decay(25.0, 0.5)
NORMAL = BivariateNormalLaw(v=1.0, rho=0.1)
THETA = dict(theta0=math.log(0.95), theta1=math.log(0.95), theta2=math.log(0.95))
DESIGNS = ("bernoulli", "block", "cluster")


def engine(spec, design="bernoulli", law=None, **kw):
    return TruthEngine(spec, AssignmentDesign(design), law, **kw)


# -- conditional quantities -------------------------------------------------


def test_initial_cdf_examples():
    spec = spec_table1()
    assert initial_cdf(spec, 2.0, 0, 0.0) == pytest.approx(1 - math.exp(-0.4), abs=1e-12)
    assert 1 - math.exp(-0.4) == pytest.approx(0.32968, abs=1e-5)
    assert initial_cdf(spec, 0.0, 0, 0.0) == 0.0
    assert initial_cdf(spec, 2.0, 1, 0.0) == pytest.approx(1 - math.exp(-0.16), abs=1e-12)
    assert 1 - math.exp(-0.16) == pytest.approx(0.14786, abs=1e-5)


def test_controlled_outcome_example():
    spec = HazardSpec(alpha=ALPHA, gamma=GAMMA)
    expected = (1 - math.exp(-0.1)) + math.exp(-0.1) * (1 - math.exp(-10.2 * 1.5))
    got = controlled_outcome(spec, 2.0, 0.5, (0, 0), ZERO_L)
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(0.99999, abs=1e-5)


@pytest.mark.parametrize("w_j", [0.1, 0.7, 1.9, 3.0])
def test_controlled_without_contagion_is_initial_cdf(w_j):
    spec = spec_table1(gamma=NO_CONTAGION, alpha=SINE, **THETA)
    l = (0.3, -1.2)
    for x in ((0, 0), (1, 0), (0, 1), (1, 1)):
        assert controlled_outcome(spec, 2.5, w_j, x, l) == pytest.approx(initial_cdf(spec, 2.5, x[0], l[0]), abs=1e-14)


@pytest.mark.parametrize("w_j", [0.4, 1.0, 2.6])
def test_controlled_before_partner_infection_is_exact(w_j):
    spec = spec_table2(alpha=SINE, gamma=DECAY)
    t = w_j / 2
    assert controlled_outcome(spec, t, w_j, (1, 0), (0.2, 0.1)) == initial_cdf(spec, t, 1, 0.2)


def test_controlled_continuous_at_partner_time():
    spec = spec_table2()
    w = 0.8
    left = controlled_outcome(spec, w, w, (0, 1), ZERO_L)
    right = controlled_outcome(spec, w + 1e-9, w, (0, 1), ZERO_L)
    assert right - left == pytest.approx(0.0, abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.lists(st.floats(0.0, 4.0), min_size=2, max_size=8), st.sampled_from([0, 1]))
def test_controlled_monotone_in_t(w_j, ts, x_i):
    spec = spec_table1(alpha=SINE, gamma=DECAY, **THETA)
    values = [controlled_outcome(spec, t, w_j, (x_i, 1), (0.5, -0.5)) for t in sorted(ts)]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


def test_natural_without_contagion():
    spec = spec_table1(gamma=NO_CONTAGION, **THETA)
    l = (0.4, -0.2)
    for xp in (0, 1):
        got = natural_outcome(spec, 2.0, (1, 0), xp, l)
        assert got == pytest.approx(initial_cdf(spec, 2.0, 1, l[0]), abs=1e-9)


@pytest.mark.parametrize("spec_fn", [spec_table1, spec_table2])
@pytest.mark.parametrize("x", [(0, 0), (1, 0), (0, 1), (1, 1)])
def test_natural_same_world_equals_joint_route(spec_fn, x):
    # Integrated route (controlled outcome integrated over W_j) vs the direct
    # joint-density route: two independent integrals of the same probability
    spec = spec_fn(alpha=SINE, gamma=DECAY, **THETA)
    l = (np.array([[0.3], [-1.0]]), np.array([[0.1], [0.7]]))
    nat = natural_outcome(spec, 2.0, x, x[1], l)
    joint = observed_risk(spec, 2.0, x, l)
    np.testing.assert_allclose(nat, joint, atol=1e-8)


def test_natural_partner_never_infected_externally():
    spec = spec_table2(per_subject_alpha_scale=(1.0, 0.0))
    assert natural_outcome(spec, 2.0, (0, 0), 0, ZERO_L) == pytest.approx(initial_cdf(spec, 2.0, 0, 0.0), abs=1e-12)


def test_secondary_attack_parts_bounds():
    spec = spec_table1()
    num, den = secondary_attack_parts(spec, 2.0, (0, 1), ZERO_L)
    assert 0 < num < den < 1


# -- standardization ---------------------------------------------------------


def test_standardize_point_law_is_exact():
    spec = spec_table1(**THETA)
    law = PointLaw((0.7,), (-0.3,))

    def inner(l):
        return initial_cdf(spec, 2.0, 0, l.l_i)

    res = standardize(spec, inner, law, n_draws=1000, seed=3)
    assert res.value == initial_cdf(spec, 2.0, 0, 0.7)
    assert res.se == 0.0


def test_standardize_inert_covariates():
    spec = spec_table1()

    def inner(l):
        return natural_outcome(spec, 2.0, (0, 0), 1, CovariatePair(l.l_i, l.l_j))

    res = standardize(spec, inner, NORMAL, n_draws=200, seed=1)
    assert res.value == pytest.approx(natural_outcome(spec, 2.0, (0, 0), 1, ZERO_L), abs=1e-12)


@pytest.mark.slow
def test_standardize_agrees_with_large_rerun():
    spec = spec_table1(**THETA)

    def inner(l):
        return initial_cdf(spec, 2.0, 0, l.l_i)

    a = standardize(spec, inner, NORMAL, n_draws=200_000, seed=1)
    b = standardize(spec, inner, NORMAL, n_draws=1_000_000, seed=99)
    assert abs(a.value - b.value) < 3 * math.hypot(a.se, b.se)
    again = standardize(spec, inner, NORMAL, n_draws=200_000, seed=1)
    assert again == a


# -- requests and values -----------------------------------------------------


def test_request_validation():
    with pytest.raises(InputError):
        EstimandRequest("CE_natural", 2.0, x_i=0)
    with pytest.raises(InputError):
        EstimandRequest("DE", 2.0, x_i=0)
    with pytest.raises(InputError):
        EstimandRequest("SE_natural", 2.0, x_j=2)
    with pytest.raises(InputError):
        EstimandRequest("bogus", 2.0)
    with pytest.raises(InputError):
        EstimandRequest("DE", -1.0)
    with pytest.raises(InputError):
        EstimandRequest("CE_controlled", 2.0, w_j=1.0, w_j_prime=1.0, x_i=0, x_j=0)


def test_value_range_checks():
    req = EstimandRequest("AR", 2.0, x_i=0)
    with pytest.raises(NumericError):
        EstimandValue(req, 1.5)
    with pytest.raises(InputError):
        EstimandValue(req, 0.5, provenance="oracle")


def test_ratio_estimands_undefined_without_infections():
    spec = HazardSpec(alpha=BaselineHazard.constant(0.0), gamma=GAMMA)
    eng = engine(spec)
    with pytest.raises(UndefinedEstimandError):
        eng("VE_I_net", 2.0)
    with pytest.raises(UndefinedEstimandError):
        eng("VE_AR", 2.0)


def test_asymmetric_kinds_need_home_bound_subject():
    with pytest.raises(InputError):
        engine(spec_table2())("VE_I_asym", 2.0)


def test_unidentified_crude_under_design():
    with pytest.raises(UndefinedEstimandError):
        engine(spec_table1(), "block")("IDE", 2.0)


def test_estimand_function_matches_engine():
    spec = spec_table2()
    req = EstimandRequest("SE_natural", 2.0, x_j=0)
    assert estimand(spec, AssignmentDesign(), req).value == engine(spec)(req.kind, 2.0, x_j=0).value


# -- identities and scenario values -----------------------------------------


@pytest.mark.parametrize("spec_fn", [spec_table1, spec_table2])
@pytest.mark.parametrize("alpha", [ALPHA, SINE])
def test_ide_decomposition(spec_fn, alpha):
    spec = spec_fn(alpha=alpha, gamma=GAMMA if alpha is ALPHA else DECAY, **THETA)
    eng = engine(spec, law=NORMAL, n_draws=2000, seed=5)
    for t in (0.5, 2.0, 3.5):
        ide = eng("IDE", t).value
        ce = eng("CE_natural", t, x_i=0, x_j=1).value
        ie = eng("IE_natural", t, x_i=0).value
        assert ide == pytest.approx(-ce + ie, abs=1e-8)


def test_table1_constant_truth_values():
    spec = spec_table1(**THETA)
    eng = engine(spec, law=NORMAL, n_draws=20_000, seed=1)
    assert eng("CE_natural", 2.0, x_i=0, x_j=0).value == pytest.approx(0.12, abs=0.03)
    assert eng("SE_natural", 2.0, x_j=0).value == pytest.approx(-0.14, abs=0.03)
    assert eng("IE_natural", 2.0, x_i=0).value == pytest.approx(-0.19, abs=0.03)
    assert eng("DE", 2.0).value == pytest.approx(-0.16, abs=0.02)
    assert eng("IDE", 2.0).value == pytest.approx(-0.20, abs=0.02)
    # the formula sign; the reference table reports the negation
    assert eng("VE_I_net", 2.0).value == pytest.approx(0.69, abs=0.04)
    assert eng.with_design(AssignmentDesign("block"))("DE", 2.0).value == pytest.approx(0.06, abs=0.02)
    assert eng.with_design(AssignmentDesign("cluster"))("DE", 2.0).value == pytest.approx(-0.39, abs=0.02)


def test_no_contagion_nulls():
    spec = spec_table1(gamma=NO_CONTAGION, **THETA)
    eng = engine(spec, law=NORMAL, n_draws=5000, seed=1)
    for kind, args in (("CE_natural", dict(x_i=0, x_j=0)), ("IE_natural", dict(x_i=0)), ("IDE", {})):
        assert eng(kind, 2.0, **args).value == pytest.approx(0.0, abs=1e-12)
    sar0, sar1 = eng("SAR", 2.0, x_i=0, x_j=0), eng("SAR", 2.0, x_i=0, x_j=1)
    assert 0 < sar0.value < 1 and 0 < sar1.value < 1
    assert eng("VE_I_net", 2.0).value > 0


def test_crude_attack_rate_matches_mixture():
    spec = spec_table2()
    eng = engine(spec, "bernoulli")
    ar = eng("AR", 2.0, x_i=1).value
    parts = [eng("AR", 2.0, x_i=1, x_j=xj).value for xj in (0, 1)]
    assert ar == pytest.approx(sum(parts) / 2, abs=1e-12)


def test_mc_se_reported_with_covariates():
    eng = engine(spec_table1(**THETA), law=NORMAL, n_draws=4000, seed=2)
    v = eng("SE_natural", 2.0, x_j=0)
    assert 0 < v.mc_se < 0.01
    assert v.provenance == "truth"


# -- sign results ------------------------------------------------------------


def test_sign_of_direct_effect_by_design():
    spec = spec_table1(beta0=0.0, beta1=0.0, **THETA)
    eng = engine(spec, law=NORMAL, n_draws=2000, seed=4)
    for t in (0.5, 1.0, 2.0, 3.0):
        assert eng.with_design(AssignmentDesign("cluster"))("DE", t).value < 0
        assert eng.with_design(AssignmentDesign("block"))("DE", t).value > 0
        assert abs(eng("DE", t).value) < 1e-8
    null = engine(spec_table1(beta0=0.0, beta1=0.0, sigma=0.0, **THETA), law=NORMAL, n_draws=2000, seed=4)
    for design in DESIGNS:
        e = null.with_design(AssignmentDesign(design))
        assert abs(e("DE", 2.0).value) < 1e-8
        assert abs(e("VE_AR", 2.0).value) < 1e-8


@pytest.mark.parametrize("eps", [1e-6, 0.2, 0.4, 0.9])
def test_secondary_attack_rate_effect_positive_without_infectiousness(eps):
    for alpha, gamma in ((ALPHA, GAMMA), (SINE, DECAY)):
        spec = HazardSpec(alpha=alpha, gamma=gamma, beta0=math.log(eps))
        assert engine(spec)("VE_I_net", 2.0).value > 0


def test_secondary_attack_rate_undefined_when_treated_partner_never_first():
    # eps = 0: a treated partner is never infected first, so SAR(0,1) conditions on nothing
    spec = HazardSpec(alpha=ALPHA, gamma=GAMMA, beta0=-math.inf)
    with pytest.raises(UndefinedEstimandError):
        engine(spec)("VE_I_net", 2.0)


def test_secondary_attack_rate_effect_null():
    for alpha, gamma in ((ALPHA, GAMMA), (SINE, DECAY)):
        spec = HazardSpec(alpha=alpha, gamma=gamma, **THETA)
        assert abs(engine(spec, law=NORMAL, n_draws=2000)("VE_I_net", 2.0).value) < 1e-8


@pytest.mark.parametrize("eps", [0.2, 0.4, 0.9])
def test_secondary_attack_rate_effect_positive_without_contagion(eps):
    spec = HazardSpec(alpha=ALPHA, gamma=NO_CONTAGION, beta0=math.log(eps))
    assert engine(spec)("VE_I_net", 2.0).value > 0


T_GRID = np.linspace(0.3, 3.0, 10)


def _asym(spec_fn, **changes):
    return spec_fn(per_subject_alpha_scale=(0.0, 1.0), **changes)


def test_asymmetric_infectiousness_equals_natural_ie_when_partner_law_fixed():
    # with no treatment effect on the external hazard, W_j(0) and W_j(1) coincide
    eng = engine(_asym(spec_table2, beta0=0.0))
    for t in T_GRID:
        assert eng("VE_I_asym", t).value == pytest.approx(eng("IE_natural", t, x_i=0).value, abs=1e-8)


@pytest.mark.parametrize("spec_fn", [spec_table1, spec_table2])
def test_asymmetric_infectiousness_equals_natural_ie_under_treated_partner_law(spec_fn):
    eng = engine(_asym(spec_fn))
    for t in T_GRID:
        asym = eng("VE_I_asym", t).value
        assert asym == pytest.approx(eng("IE_natural", t, x_i=0, x_j_prime=1).value, abs=1e-8)


def test_asymmetric_infectiousness_differs_from_untreated_partner_law():
    # the equality with the W_j(0) marginalization needs beta0 = 0
    eng = engine(_asym(spec_table2))
    gaps = [abs(eng("VE_I_asym", t).value - eng("IE_natural", t, x_i=0).value) for t in T_GRID]
    assert max(gaps) > 1e-3


@pytest.mark.parametrize("gamma", [GAMMA, DECAY])
def test_asymmetric_contagion_sign_harmful_susceptibility(gamma):
    spec = _asym(spec_table2, gamma=gamma, beta0=math.log(2.0), beta1=math.log(2.0))
    eng = engine(spec)
    assert eng("SE_controlled", 2.0, w_j=0.5, x_j=0).value > 0
    for t in (1.0, 2.0, 3.0):
        ve_c = eng("VE_C_asym", t).value
        ce = eng("CE_controlled", t, w_j=0.25 * t, w_j_prime=0.75 * t, x_i=0, x_j=0).value
        ce_rev = eng("CE_controlled", t, w_j=0.75 * t, w_j_prime=0.25 * t, x_i=0, x_j=0).value
        assert ce > 0
        assert np.sign(ve_c) == -np.sign(ce_rev)
        # the ordering w_j < w_j' gives the same sign, not the opposite one
        assert np.sign(ve_c) == np.sign(ce)


@pytest.mark.parametrize("gamma", [GAMMA, DECAY])
def test_asymmetric_contagion_null(gamma):
    eng = engine(_asym(spec_table2, gamma=gamma, beta0=0.0, beta1=0.0))
    for t in T_GRID:
        assert abs(eng("VE_C_asym", t).value) < 1e-8


def test_contagion_positivity_grid():
    for alpha, gamma in ((ALPHA, GAMMA), (SINE, DECAY)):
        eng = engine(spec_table2(alpha=alpha, gamma=gamma))
        for t in (1.0, 2.0, 3.0):
            grid = np.linspace(0.05, t - 0.05, 6)
            for a in range(len(grid)):
                for b in range(a + 1, len(grid)):
                    ce = eng("CE_controlled", t, w_j=grid[a], w_j_prime=grid[b], x_i=0, x_j=0).value
                    assert ce > 0


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from(["CE_natural", "SE_natural", "IE_natural", "DE", "IDE", "SAR"]),
    st.floats(0.05, 3.5),
    st.sampled_from(DESIGNS),
)
def test_outputs_in_range(kind, t, design):
    eng = engine(spec_table1(alpha=SINE, gamma=DECAY), design)
    args = {
        "CE_natural": dict(x_i=0, x_j=0),
        "SE_natural": dict(x_j=0),
        "IE_natural": dict(x_i=0),
        "SAR": dict(x_i=0, x_j=0),
    }.get(kind, {})
    try:
        v = eng(kind, t, **args).value
    except UndefinedEstimandError:
        return
    lo = 0.0 if kind == "SAR" else -1.0
    assert lo <= v <= 1.0


def test_with_design_shares_draws():
    eng = engine(spec_table1(**THETA), law=NORMAL, n_draws=1000, seed=3)
    other = eng.with_design(AssignmentDesign("cluster"))
    assert other.l is eng.l
    assert other.design.kind == "cluster"
