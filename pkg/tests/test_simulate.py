import math

import numpy as np
import pytest
from scipy import integrate, stats

from conftest import ALPHA, GAMMA, simulated, spec_table1, spec_table2
from vaxpair.config import bundled_config
from vaxpair.design import AssignmentDesign, BivariateNormalLaw, PointLaw, assign_treatments, draw_covariates
from vaxpair.errors import InputError
from vaxpair.hazards import BaselineHazard, HazardSpec, external_hazard
from vaxpair.rng import uniform_block
from vaxpair.simulate import Scenario, TrialData, simulate_partnership, simulate_trial
from vaxpair.truth import TruthEngine, controlled_outcome, initial_cdf

SINE = BaselineHazard.sinusoidal(0.4, math.pi / 2)
DECAY = BaselineHazard.exp_decay(25.0, 0.5)
NO_CONTAGION = BaselineHazard.constant(0.0)


def scenario(spec, design="bernoulli", law=None, n=100_000, tau=4.0, seed=17):
    return Scenario("test", spec, AssignmentDesign(design), law or PointLaw(), n, tau, seed)


# -- covariates and assignment ----------------------------------------------


@pytest.mark.parametrize("rho", [0.0, 0.1])
def test_covariate_correlation(rho):
    l1, l2 = draw_covariates(BivariateNormalLaw(1.0, rho), 1_000_000, seed=5)
    assert abs(np.corrcoef(l1[:, 0], l2[:, 0])[0, 1] - rho) < 0.005
    assert abs(l1.mean()) < 0.005 and abs(l2.var() - 1.0) < 0.01


def test_covariates_deterministic_and_point_law():
    law = BivariateNormalLaw(2.0, 0.3, dim=2)
    a = draw_covariates(law, 1000, seed=9)
    b = draw_covariates(law, 1000, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    # substreams: a slice starting mid-stream matches
    c = draw_covariates(law, 10, seed=9, start=500)
    assert np.array_equal(c[0], a[0][500:510])
    p1, p2 = draw_covariates(PointLaw((0.5,), (-1.0,)), 50, seed=1)
    assert np.all(p1 == 0.5) and np.all(p2 == -1.0)


@pytest.mark.parametrize("v, rho", [(0.0, 0.1), (-1.0, 0.0), (1.0, 1.0), (1.0, -1.5)])
def test_covariate_law_validation(v, rho):
    with pytest.raises(InputError):
        BivariateNormalLaw(v, rho)


def test_uniforms_open_interval():
    u = uniform_block(0, 0, 100_000, 8)
    assert u.min() > 0 and u.max() < 1


def test_assignment_supports():
    cov = draw_covariates(BivariateNormalLaw(1.0, 0.1), 100_000, seed=2)
    x1, x2 = assign_treatments(AssignmentDesign("block"), cov, seed=2)
    assert np.all(x1 + x2 == 1)
    assert (x1 + x2).sum() == 100_000
    y1, y2 = assign_treatments(AssignmentDesign("cluster"), cov, seed=2)
    assert np.all(y1 == y2)
    z1, z2 = assign_treatments(AssignmentDesign("bernoulli"), cov, seed=2)
    for a in (0, 1):
        for b in (0, 1):
            assert abs(np.mean((z1 == a) & (z2 == b)) - 0.25) < 0.006
    for x in (x1, y1, z1):
        assert abs(x.mean() - 0.5) < 0.01


def test_observational_assignment_logistic():
    zeros = (np.zeros((100_000, 1)), np.zeros((100_000, 1)))
    x1, x2 = assign_treatments(AssignmentDesign("observational"), zeros, seed=3)
    se = math.sqrt(0.25 / 100_000)
    assert abs(x1.mean() - 0.5) < 4 * se and abs(x2.mean() - 0.5) < 4 * se
    cov = draw_covariates(BivariateNormalLaw(1.0, 0.1), 100_000, seed=3)
    x1, _ = assign_treatments(AssignmentDesign("observational"), cov, seed=3)
    # treatment tracks the covariate
    assert x1[cov[0][:, 0] > 1].mean() > 0.7 and x1[cov[0][:, 0] < -1].mean() < 0.3


def test_design_probabilities_sum_to_one():
    l = np.linspace(-2, 2, 7)
    for kind in ("observational", "bernoulli", "block", "cluster"):
        d = AssignmentDesign(kind)
        total = sum(np.asarray(d.prob(a, b, l, -l)) for a in (0, 1) for b in (0, 1))
        np.testing.assert_allclose(total, 1.0)


# -- records ----------------------------------------------------------------


def test_records_are_consistent():
    data = simulate_trial(scenario(spec_table2(**_theta()), law=BivariateNormalLaw(1.0, 0.1), n=20_000))
    assert np.all(data.t1 > 0) and np.all(data.t2 > 0)
    assert np.all(data.t1 <= data.tau) and np.all(data.t2 <= data.tau)
    assert np.all(data.t1[data.c1 == 1] == data.tau)
    assert np.all(data.t1[data.c1 == 0] < data.tau)
    both = (data.c1 == 0) & (data.c2 == 0)
    rec_first = np.where(data.t1 <= data.t2, 1, 2)
    assert np.array_equal(data.first[both], rec_first[both])
    for rec in list(data.records())[:200]:
        if rec.first_infected:
            assert rec.w_first == min(t for t, c in ((rec.t1, rec.c1), (rec.t2, rec.c2)) if c == 0)
        else:
            assert rec.w_first is None and rec.c1 == rec.c2 == 1


def _theta():
    return dict(theta0=math.log(0.95), theta1=math.log(0.95), theta2=math.log(0.95))


def test_from_columns_orders_and_breaks_ties():
    data = TrialData.from_columns(
        ids=np.array([2, 0, 1]),
        l1=np.zeros(3),
        l2=np.zeros(3),
        x1=np.array([0, 1, 0]),
        x2=np.array([0, 0, 1]),
        t1=np.array([1.0, 0.5, 4.0]),
        c1=np.array([0, 0, 1]),
        t2=np.array([1.0, 0.7, 0.3]),
        c2=np.array([0, 0, 0]),
        tau=4.0,
    )
    assert list(data.ids) == [0, 1, 2]
    assert list(data.first) == [1, 2, 1]
    with pytest.raises(InputError):
        TrialData.from_columns([0], [0.0], [0.0], [0], [0], [5.0], [0], [1.0], [0], tau=4.0)


def test_scenario_validation():
    with pytest.raises(InputError):
        scenario(spec_table1(), n=0)
    with pytest.raises(InputError):
        scenario(spec_table1(), tau=0.0)
    with pytest.raises(InputError):
        scenario(spec_table1(), law=BivariateNormalLaw(1.0, 0.1, dim=2))


# -- determinism --------------------------------------------------------------


def test_same_seed_identical():
    sc = scenario(spec_table1(alpha=SINE, gamma=DECAY, **_theta()), law=BivariateNormalLaw(1.0, 0.1), n=30_000)
    a = simulate_trial(sc, threads=1)
    b = simulate_trial(sc, threads=8)
    c = simulate_trial(sc, threads=3, chunk=1000)
    assert a.equals(b) and a.equals(c)
    d = simulate_trial(sc.with_(seed=18), threads=1)
    assert not a.equals(d)


def test_prefix_stability():
    # partnership k's draws do not depend on n
    sc = scenario(spec_table2(), n=5000)
    big = simulate_trial(sc)
    small = simulate_trial(sc.with_(n=1000))
    assert np.array_equal(big.t1[:1000], small.t1) and np.array_equal(big.x2[:1000], small.x2)


def test_metadata_carried():
    data = simulate_trial(scenario(spec_table2(), n=100))
    assert data.metadata["design"] == "bernoulli"
    assert data.metadata["seed"] == 17
    assert data.metadata["sampler"] == "attribution"


# -- distributional checks ---------------------------------------------------


def test_no_contagion_marginals_are_exponential():
    spec = HazardSpec(alpha=ALPHA, gamma=NO_CONTAGION)
    data = simulate_trial(scenario(spec, tau=200.0, seed=41))
    cdf = stats.expon(scale=1 / 0.2).cdf
    assert stats.kstest(data.t1, cdf).pvalue > 0.01
    assert stats.kstest(data.t2, cdf).pvalue > 0.01


def test_no_contagion_sinusoidal_marginals():
    spec = HazardSpec(alpha=SINE, gamma=NO_CONTAGION, beta0=math.log(0.4))
    data = simulate_trial(scenario(spec, tau=4.0, seed=43))
    for x in (0, 1):
        sel = (data.x1 == x) & (data.c1 == 0)
        n_all = np.sum(data.x1 == x)
        # KS on the observed part of the CDF, renormalized to [0, tau)
        f_tau = initial_cdf(spec, 4.0, x, 0.0)
        cdf = lambda t: initial_cdf(spec, np.asarray(t), x, 0.0) / f_tau  # noqa: E731
        assert stats.kstest(data.t1[sel], cdf).pvalue > 0.01
        se = math.sqrt(f_tau * (1 - f_tau) / n_all)
        assert abs(sel.sum() / n_all - f_tau) < 3 * se


def test_scalar_sampler_matches_vectorized():
    spec = spec_table2(alpha=SINE, gamma=DECAY)
    rng = np.random.default_rng(7)
    recs = [simulate_partnership(spec, (0, 1), (0.0, 0.0), 4.0, rng) for _ in range(3000)]
    scalar_t1 = np.array([r.t1 for r in recs])
    sc = scenario(spec, design="block", n=20_000, seed=8)
    data = simulate_trial(sc)
    sel = data.x1 == 0
    assert stats.ks_2samp(scalar_t1, data.t1[sel]).pvalue > 0.001
    assert stats.ks_2samp([r.t2 for r in recs], data.t2[sel]).pvalue > 0.001


def test_latent_minimum_sampler_agrees():
    sc = scenario(spec_table2(alpha=SINE, gamma=DECAY), seed=9)
    a = simulate_trial(sc)
    b = simulate_trial(sc, latent_minimum=True)
    assert b.metadata["sampler"] == "latent_minimum"
    assert stats.ks_2samp(a.t1, b.t1).pvalue > 0.001
    assert stats.ks_2samp(a.t2, b.t2).pvalue > 0.001


def test_asymmetric_subject_never_first():
    spec = spec_table2(per_subject_alpha_scale=(0.0, 1.0))
    data = simulate_trial(scenario(spec, n=20_000))
    assert not np.any(data.first == 1)
    assert np.all((data.t1 > data.t2) | (data.c1 == 1))


def test_exchangeable_marginals():
    data = simulated("table2_constant")
    assert stats.ks_2samp(data.t1, data.t2).pvalue > 0.01


@pytest.mark.parametrize("alpha", [ALPHA, SINE])
def test_competing_risk_subdistribution(alpha):
    spec = spec_table2(alpha=alpha)
    data = simulate_trial(scenario(spec, seed=23))
    sel = (data.x1 == 0) & (data.x2 == 1)
    n = sel.sum()
    for w in (0.25, 0.5, 1.0, 2.0, 3.5):
        emp = np.mean((data.first[sel] == 1) & (data.t1[sel] <= w))

        def dens(u):
            f_i = external_hazard(spec, u, 0, 0.0, 1) * (1 - initial_cdf(spec, u, 0, 0.0, 1))
            return f_i * (1 - initial_cdf(spec, u, 1, 0.0, 2))

        exact, _ = integrate.quad(dens, 0, w, epsabs=1e-12)
        assert abs(emp - exact) < 3 * math.sqrt(exact * (1 - exact) / n)


def test_censoring_fraction():
    spec = spec_table2(alpha=SINE)
    data = simulate_trial(scenario(spec, seed=29))
    sel = (data.x1 == 1) & (data.x2 == 1)
    n = sel.sum()
    emp = np.mean((data.c1[sel] == 1) & (data.c2[sel] == 1))
    exact = (1 - initial_cdf(spec, 4.0, 1, 0.0, 1)) * (1 - initial_cdf(spec, 4.0, 1, 0.0, 2))
    assert abs(emp - exact) < 3 * math.sqrt(exact * (1 - exact) / n)


@pytest.mark.parametrize("gamma, u", [(GAMMA, 1.5), (BaselineHazard.constant(1.0), 0.5)])
def test_controlled_conditional_factor(gamma, u):
    spec = HazardSpec(alpha=ALPHA, gamma=gamma)
    data = simulate_trial(scenario(spec, n=400_000, seed=31))
    h = 0.02
    # subject 1 survives subject 2's infection near u
    sel = (data.first == 2) & (np.abs(data.t2 - u) <= h)
    emp = np.mean((data.c1[sel] == 0) & (data.t1[sel] < 2.0))
    f_u = initial_cdf(spec, u, 0, 0.0)
    exact = (controlled_outcome(spec, 2.0, u, (0, 0), (0.0, 0.0)) - f_u) / (1 - f_u)
    assert abs(emp - exact) < 3 * math.sqrt(exact * (1 - exact) / sel.sum()) + 1e-3


def test_same_world_mean_matches_truth():
    cfg = bundled_config("table2_constant")
    data = simulated("table2_constant")
    truth = TruthEngine(cfg.hazard_spec(), cfg.assignment(), cfg.covariate_law(), n_draws=50_000, seed=1)
    expected = truth("Y_natural", 2.0, x_i=0, x_j=0)
    sel = (data.x1 == 0) & (data.x2 == 0)
    y = (data.c1[sel] == 0) & (data.t1[sel] < 2.0)
    se = math.hypot(y.std(ddof=1) / math.sqrt(sel.sum()), expected.mc_se)
    assert abs(y.mean() - expected.value) < 3 * se


def test_block_design_treats_exactly_n():
    data = simulated("table1_constant", design="block")
    assert int(data.x1.sum() + data.x2.sum()) == len(data)
