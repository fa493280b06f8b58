"""The secondary attack rate contrast is not a measure of infectiousness.

Run with ``python3 demos/03_secondary_attack_rate.py``.
"""

import math

from vaxpair.design import AssignmentDesign
from vaxpair.errors import UndefinedEstimandError
from vaxpair.hazards import BaselineHazard, HazardSpec
from vaxpair.truth import TruthEngine

alpha, gamma = BaselineHazard.constant(0.2), BaselineHazard.constant(10.0)


def ve_net(spec):
    try:
        return TruthEngine(spec, AssignmentDesign("bernoulli"), None)("VE_I_net", 2.0).value
    except UndefinedEstimandError as exc:
        return f"undefined ({exc})"


# Treatment leaves infectiousness alone (sigma = 0) but lowers susceptibility.
# The contrast is still positive: treated index cases are infected later,
# which leaves their partners less time at risk.
for eps in (0.9, 0.4, 0.2):
    spec = HazardSpec(alpha=alpha, gamma=gamma, beta0=math.log(eps))
    print(f"no infectiousness effect, eps={eps}: VE_I_net = {ve_net(spec):.4f}")

# Without any transmission at all the contrast stays positive.
spec = HazardSpec(alpha=alpha, gamma=BaselineHazard.constant(0.0), beta0=math.log(0.4))
print(f"no transmission: VE_I_net = {ve_net(spec):.4f}")

# Only when treatment does nothing is the contrast null.
print(f"no treatment effect: VE_I_net = {ve_net(HazardSpec(alpha=alpha, gamma=gamma))}")

# A perfectly protected index case is never infected first.
print("eps = 0:", ve_net(HazardSpec(alpha=alpha, gamma=gamma, beta0=-math.inf)))
