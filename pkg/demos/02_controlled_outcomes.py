"""Controlled outcomes: the risk of a person when the partner's infection time is fixed.

Run with ``python3 demos/02_controlled_outcomes.py``.
"""

import numpy as np

from vaxpair.config import bundled_config
from vaxpair.design import AssignmentDesign
from vaxpair.truth import TruthEngine

cfg = bundled_config("figure3")
eng = TruthEngine(cfg.hazard_spec(), AssignmentDesign("bernoulli"), cfg.covariate_law(), 5_000, cfg.truth_seed)

# Before the partner is infected, only outside exposure matters, so every
# curve follows F_i(t); afterwards the partner's infectiousness takes over.
grid = np.round(np.arange(0.0, 4.01, 0.5), 2)
print("t     " + "  ".join(f"w_j={w:<4}" for w in (0.5, 1.0, 1.5)))
for t in grid:
    row = [eng("Y_controlled", t, w_j=w, x_i=0, x_j=0).value for w in (0.5, 1.0, 1.5)]
    print(f"{t:<5} " + "  ".join(f"{v:8.4f}" for v in row))

# An earlier infection of the partner never lowers the risk. The contagion
# effect CE(t; 0.5, 1.5) opens after t = 0.5 and closes again once both
# curves saturate.
for t in (0.5, 1.0, 2.0, 3.0):
    ce = eng("CE_controlled", t, w_j=0.5, w_j_prime=1.5, x_i=0, x_j=0).value
    print(f"CE({t}; 0.5, 1.5) = {ce:.4f}")
