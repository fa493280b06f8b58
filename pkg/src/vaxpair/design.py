"""Covariate laws and treatment-assignment designs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit, ndtri

from .errors import InputError
from .rng import uniform_block


class CovariatePair(NamedTuple):
    """Covariates of a partnership, ordered (own, partner)."""

    l_i: np.ndarray
    l_j: np.ndarray

    def swap(self):
        return CovariatePair(self.l_j, self.l_i)


@dataclass(frozen=True)
class PointLaw:
    """Degenerate covariate law: every partnership has the same covariates."""

    l_1: tuple = (0.0,)
    l_2: tuple = (0.0,)

    def __post_init__(self):
        l1 = tuple(float(v) for v in np.atleast_1d(self.l_1))
        l2 = tuple(float(v) for v in np.atleast_1d(self.l_2))
        if len(l1) != len(l2):
            raise InputError("point covariates must share one dimension")
        if not all(math.isfinite(v) for v in l1 + l2):
            raise InputError("point covariates must be finite")
        object.__setattr__(self, "l_1", l1)
        object.__setattr__(self, "l_2", l2)

    @property
    def dim(self):
        return len(self.l_1)

    @property
    def kind(self):
        return "point"

    def from_normals(self, z):
        n = z.shape[0]
        return (np.tile(np.array(self.l_1), (n, 1)), np.tile(np.array(self.l_2), (n, 1)))


@dataclass(frozen=True)
class BivariateNormalLaw:
    """Each covariate dimension is bivariate normal within the pair.

    Mean zero, variance ``v`` and within-pair correlation ``rho``;
    dimensions are independent of each other.
    """

    v: float = 1.0
    rho: float = 0.0
    dim: int = 1

    def __post_init__(self):
        if not (self.v > 0 and math.isfinite(self.v)):
            raise InputError(f"covariate variance v must be > 0, got {self.v}")
        if not (abs(self.rho) < 1):
            raise InputError(f"covariate correlation rho must satisfy |rho| < 1, got {self.rho}")
        if int(self.dim) < 1:
            raise InputError("covariate dimension must be >= 1")

    @property
    def kind(self):
        return "bivariate_normal"

    def from_normals(self, z):
        """Map standard normals ``z`` of shape (n, 2*dim) to the pair's covariates."""
        p = self.dim
        z1, z2 = z[:, :p], z[:, p : 2 * p]
        s = math.sqrt(self.v)
        l1 = s * z1
        l2 = s * (self.rho * z1 + math.sqrt(1.0 - self.rho**2) * z2)
        return l1, l2


DESIGN_KINDS = ("observational", "bernoulli", "block", "cluster")


@dataclass(frozen=True)
class AssignmentDesign:
    """Joint law of the partnership's treatments given covariates.

    ``observational`` treats each subject independently with probability
    ``expit(l[0])`` (first covariate); the randomized kinds ignore covariates
    and all have ``Pr(X_i = 1) = 1/2``.
    """

    kind: str = "bernoulli"

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise InputError(f"unknown design {self.kind!r}; expected one of {DESIGN_KINDS}")

    @property
    def randomized(self):
        return self.kind != "observational"

    def prob(self, x_i, x_j, l_i=None, l_j=None):
        """``Pr(X = (x_i, x_j) | L)``; arrays when covariates are arrays."""
        if self.kind == "bernoulli":
            return 0.25
        if self.kind == "block":
            return 0.5 if x_i != x_j else 0.0
        if self.kind == "cluster":
            return 0.5 if x_i == x_j else 0.0
        if l_i is None or l_j is None:
            raise InputError("observational design needs covariates")
        p_i = expit(_first(l_i))
        p_j = expit(_first(l_j))
        return (p_i if x_i else 1.0 - p_i) * (p_j if x_j else 1.0 - p_j)

    def assign(self, u1, u2, l1=None, l2=None):
        """Treatment pairs from two uniform columns (one row per partnership)."""
        u1 = np.asarray(u1)
        u2 = np.asarray(u2)
        if self.kind == "bernoulli":
            x1, x2 = u1 < 0.5, u2 < 0.5
        elif self.kind == "block":
            x1 = u1 < 0.5
            x2 = ~x1
        elif self.kind == "cluster":
            x1 = u1 < 0.5
            x2 = x1.copy()
        else:
            if l1 is None or l2 is None:
                raise InputError("observational design needs covariates")
            x1 = u1 < expit(_first(l1))
            x2 = u2 < expit(_first(l2))
        return x1.astype(np.int8), x2.astype(np.int8)


def _first(l):
    # (n, dim) stacks use the first column; scalars and (n,) stacks pass through
    l = np.asarray(l, dtype=float)
    return l[:, 0] if l.ndim == 2 else l


def stride_for(dim):
    """Uniform columns consumed per partnership, padded to whole Philox blocks."""
    cols = 2 * dim + 6
    return -(-cols // 4) * 4


def draw_covariates(law, n, seed, start=0):
    """Covariates for partnerships ``start .. start+n-1`` of a seeded stream.

    Uses the same per-partnership counter-based substreams as the trial
    simulator, so ``draw_covariates(law, n, seed)`` reproduces the covariates
    of ``simulate_trial`` under that seed. Returns ``(l1, l2)`` arrays of
    shape (n, dim).
    """
    if n < 0:
        raise InputError("n must be >= 0")
    p = law.dim
    u = uniform_block(seed, start, start + n, stride_for(p))
    return law.from_normals(ndtri(u[:, : 2 * p]))


def assign_treatments(design, covariates, seed, start=0):
    """Treatment pairs for ``len(covariates[0])`` partnerships of a seeded stream."""
    l1, l2 = covariates
    l1 = np.asarray(l1, dtype=float)
    n = l1.shape[0]
    p = l1.shape[1] if l1.ndim == 2 else 1
    u = uniform_block(seed, start, start + n, stride_for(p))
    return design.assign(u[:, 2 * p], u[:, 2 * p + 1], l1, l2)
