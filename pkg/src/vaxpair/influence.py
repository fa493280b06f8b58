"""Delta-method standard errors for contrasts of sample means."""

import math

import numpy as np

from .errors import UndefinedEstimandError

RATIO_FLOOR = 1e-12


class Influence:
    """An estimate built from sample means, carried with per-unit influence values.

    Sums, differences and ratios propagate the influence values by the delta
    method, so the standard error of any smooth contrast of means comes for
    free. Units are covariate draws in the truth engine and partnerships in
    the estimators.
    """

    def __init__(self, value, infl):
        self.value = float(value)
        self.infl = np.asarray(infl, dtype=float)

    @classmethod
    def mean(cls, a):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        m = a.mean()
        return cls(m, a - m)

    @classmethod
    def ratio_of_means(cls, a, b, what):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.broadcast_to(np.asarray(b, dtype=float), a.shape)
        mb = b.mean()
        if mb < RATIO_FLOOR:
            raise UndefinedEstimandError(f"{what}: conditioning probability {mb:.3g} is too small")
        r = a.mean() / mb
        return cls(r, (a - r * b) / mb)

    @property
    def se(self):
        n = self.infl.size
        if n < 2:
            return 0.0
        return float(math.sqrt(np.sum(self.infl**2) / (n * (n - 1))))

    def __add__(self, other):
        return Influence(self.value + other.value, self.infl + other.infl)

    def __sub__(self, other):
        return Influence(self.value - other.value, self.infl - other.infl)

    def one_minus_ratio(self, other, what):
        if abs(other.value) < RATIO_FLOOR:
            raise UndefinedEstimandError(f"{what}: denominator {other.value:.3g} is too small")
        r = self.value / other.value
        return Influence(1.0 - r, -(self.infl - r * other.infl) / other.value)
