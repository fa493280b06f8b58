"""Why the direct effect depends on how treatment is assigned within partnerships.

Run with ``python3 demos/01_randomization_designs.py``. Takes about a minute.
"""

from vaxpair.config import bundled_config
from vaxpair.design import AssignmentDesign
from vaxpair.estimators import estimate
from vaxpair.reporting import table_requests
from vaxpair.simulate import simulate_trial
from vaxpair.truth import TruthEngine

# The vaccine protects against infection from outside the partnership
# (exp_beta0 = 0.4) and almost blocks onward transmission (exp_sigma = 0.01).
cfg = bundled_config("table1_constant")
engine = TruthEngine(cfg.hazard_spec(), AssignmentDesign("bernoulli"), cfg.covariate_law(), 50_000, cfg.truth_seed)

# The natural susceptibility effect is negative: vaccination helps.
print("SE_natural(2, x_j=0) =", round(engine("SE_natural", 2.0, x_j=0).value, 3))

# DE compares attack rates of treated and untreated people. Under block
# randomization every treated person has an untreated partner, who is more
# likely to bring infection home, so DE turns positive.
for design in ("bernoulli", "block", "cluster"):
    de = engine.with_design(AssignmentDesign(design))("DE", 2.0).value
    print(f"exact DE under {design:9s} = {de:+.3f}")

# The same contrast estimated from a simulated trial of 20,000 partnerships.
for k, design in enumerate(("bernoulli", "block", "cluster")):
    run = cfg.with_(design=design, n=20_000, seed=cfg.seed + k)
    data = simulate_trial(run.scenario())
    req = [r for r in table_requests(2.0) if r.kind == "DE"][0]
    v = estimate(data, req, run.estimator_config(bootstrap=0))
    print(f"estimated DE under {design:9s} = {v.value:+.3f} (se {v.mc_se:.3f})")
