"""Exact potential-outcome probabilities and estimands from a hazard model.

Every quantity is computed forward from a :class:`~vaxpair.hazards.HazardSpec`
by closed-form cumulative hazards plus adaptive Gauss-Kronrod quadrature over
the partner's infection time. Covariates are integrated out by Monte Carlo
over a seeded draw of partnerships; all per-draw work is vectorized, and the
Monte Carlo standard error is carried alongside each value.

Pairs passed to these functions are ordered (own, partner) relative to
``subject``: ``x = (x_i, x_j)`` and ``l = (l_i, l_j)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.integrate import quad_vec

from .design import AssignmentDesign, CovariatePair, PointLaw, draw_covariates
from .errors import InputError, NumericError, UndefinedEstimandError
from .hazards import external_multiplier, internal_external_multiplier, internal_multiplier
from .influence import Influence

W_QUAD_EPS = 1e-10
DEFAULT_DRAWS = 200_000

# kind -> (required args, optional args, scale)
ESTIMAND_KINDS = {
    "Y_controlled": (("w_j", "x_i", "x_j"), (), "probability"),
    "Y_natural": (("x_i", "x_j"), ("x_j_prime",), "probability"),
    "CE_controlled": (("w_j", "w_j_prime", "x_i", "x_j"), (), "difference"),
    "CE_natural": (("x_i", "x_j"), (), "difference"),
    "SE_controlled": (("w_j", "x_j"), (), "difference"),
    "SE_natural": (("x_j",), (), "difference"),
    "IE_controlled": (("w_j", "x_i"), (), "difference"),
    "IE_natural": (("x_i",), ("x_j_prime",), "difference"),
    "AR": (("x_i",), ("x_j",), "probability"),
    "VE_AR": ((), (), "ratio"),
    "DE": ((), (), "difference"),
    "IDE": ((), (), "difference"),
    "SAR": (("x_i", "x_j"), (), "probability"),
    "VE_I_net": ((), (), "ratio"),
    "VE_I_asym": ((), (), "difference"),
    "VE_C_asym": ((), (), "difference"),
}
ARG_NAMES = ("w_j", "w_j_prime", "x_i", "x_j", "x_j_prime")


@dataclass(frozen=True)
class EstimandRequest:
    """Which contrast to compute, at time ``t``, with its conditioning arguments."""

    kind: str
    t: float
    w_j: Optional[float] = None
    w_j_prime: Optional[float] = None
    x_i: Optional[int] = None
    x_j: Optional[int] = None
    x_j_prime: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ESTIMAND_KINDS:
            raise InputError(f"unknown estimand kind {self.kind!r}")
        if not (math.isfinite(self.t) and self.t >= 0):
            raise InputError(f"t must be finite and >= 0, got {self.t}")
        object.__setattr__(self, "t", float(self.t))
        required, optional, _ = ESTIMAND_KINDS[self.kind]
        for name in ARG_NAMES:
            value = getattr(self, name)
            if name in required and value is None:
                raise InputError(f"{self.kind} requires argument {name}")
            if value is not None and name not in required + optional:
                raise InputError(f"{self.kind} does not take argument {name}")
            if value is None:
                continue
            if name.startswith("x"):
                if value not in (0, 1):
                    raise InputError(f"{name} must be 0 or 1, got {value!r}")
                object.__setattr__(self, name, int(value))
            else:
                if not (math.isfinite(value) and value >= 0):
                    raise InputError(f"{name} must be finite and >= 0, got {value}")
                object.__setattr__(self, name, float(value))
        if self.kind == "CE_controlled" and self.w_j == self.w_j_prime:
            raise InputError("CE_controlled needs w_j != w_j_prime")

    @property
    def scale(self):
        return ESTIMAND_KINDS[self.kind][2]

    def args(self):
        return {name: getattr(self, name) for name in ARG_NAMES if getattr(self, name) is not None}

    def key(self):
        return (self.kind, self.t) + tuple(getattr(self, name) for name in ARG_NAMES)


@dataclass
class EstimandValue:
    """A computed estimand with its Monte Carlo standard error and provenance."""

    request: EstimandRequest
    value: float
    mc_se: float = 0.0
    provenance: str = "truth"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in ("truth", "empirical"):
            raise InputError(f"provenance must be truth or empirical, got {self.provenance!r}")
        tol = 1e-9
        scale = self.request.scale
        if math.isfinite(self.value):
            if scale == "probability" and not (-tol <= self.value <= 1 + tol):
                raise NumericError(f"{self.request.kind} = {self.value} is outside [0, 1]")
            if scale == "difference" and not (-1 - tol <= self.value <= 1 + tol):
                raise NumericError(f"{self.request.kind} = {self.value} is outside [-1, 1]")
            if scale == "ratio" and self.value > 1 + tol:
                raise NumericError(f"{self.request.kind} = {self.value} exceeds 1")

    @property
    def kind(self):
        return self.request.kind

    @property
    def t(self):
        return self.request.t


# ---------------------------------------------------------------------------
# conditional (given L) potential-outcome probabilities


def _cum_alpha(spec, t):
    return spec.alpha.cumulative(0.0, t)


def _cum_gamma(spec, s):
    return spec.gamma.cumulative(0.0, np.maximum(s, 0.0))


def _as_pair(l):
    l_i, l_j = l
    return np.asarray(l_i, dtype=float), np.asarray(l_j, dtype=float)


def initial_cdf(spec, w, x_i, l_i, subject=1):
    """Distribution function of the external infection time ``W_i(x_i)`` given ``l_i``."""
    if np.any(np.asarray(w) < 0):
        raise InputError("w must be >= 0")
    c = external_multiplier(spec, x_i, l_i, subject)
    return -np.expm1(-c * _cum_alpha(spec, w))


class _Factors(NamedTuple):
    c_i: object  # own external multiplier
    cz: object  # own external multiplier inside the post-infection hazard
    d: object  # post-infection transmission multiplier


def _factors(spec, x, l, subject):
    x_i, x_j = x
    l_i, l_j = l
    return _Factors(
        external_multiplier(spec, x_i, l_i, subject),
        internal_external_multiplier(spec, x_i, l_i, subject),
        internal_multiplier(spec, x_i, x_j, l_i, l_j),
    )


def _increment(spec, fac, t, w):
    # cumulative post-infection hazard on [w, t] for t > w
    return fac.cz * (_cum_alpha(spec, t) - _cum_alpha(spec, w)) + fac.d * _cum_gamma(spec, t - w)


def _controlled(spec, fac, t, w_j):
    f_w = -np.expm1(-fac.c_i * _cum_alpha(spec, w_j))
    return f_w + (1.0 - f_w) * -np.expm1(-_increment(spec, fac, t, w_j))


def controlled_outcome(spec, t, w_j, x, l, subject=1):
    """``E[Y_i(t; w_j, x) | L = l]``.

    For ``t <= w_j`` this is ``F_i(t)``; otherwise
    ``F_i(w_j) + (1 - F_i(w_j)) Pr(T_i < t | T_i >= w_j, T_j = w_j, x, l)``.
    """
    if t < 0 or w_j < 0:
        raise InputError("t and w_j must be >= 0")
    l = _as_pair(l)
    if t <= w_j:
        return initial_cdf(spec, t, x[0], l[0], subject)
    return _controlled(spec, _factors(spec, x, l, subject), t, w_j)


def _density(spec, c, w):
    return c * spec.alpha(w) * np.exp(-c * _cum_alpha(spec, w))


def _quad(fn, t, what):
    value, err = quad_vec(fn, 0.0, t, epsabs=W_QUAD_EPS, epsrel=W_QUAD_EPS, norm="max", limit=2000)
    if not np.all(np.isfinite(value)) or err > 1e-8:
        raise NumericError(f"quadrature for {what} on [0, {t}] did not converge (err={err})")
    return value


def natural_outcome(spec, t, x, x_j_prime, l, subject=1):
    """``E[Y_i(t; W_j(x_j'), x) | L = l]``.

    Integrates the controlled outcome against the partner's external
    infection-time law under ``x_j'`` over ``[0, t]`` and adds the mass of
    partner infections after ``t``, where the outcome reduces to ``F_i(t)``.
    """
    if t < 0:
        raise InputError("t must be >= 0")
    l = _as_pair(l)
    partner = 3 - subject
    f_t = initial_cdf(spec, t, x[0], l[0], subject)
    if t == 0:
        return f_t
    fac = _factors(spec, x, l, subject)
    c_j = external_multiplier(spec, x_j_prime, l[1], partner)
    tail = f_t * np.exp(-c_j * _cum_alpha(spec, t))

    def integrand(w):
        return _controlled(spec, fac, t, w) * _density(spec, c_j, w)

    return _quad(integrand, t, "natural outcome") + tail


def observed_risk(spec, t, x, l, subject=1):
    """``E[Y_i(t) | X = x, L = l]`` from the joint law of the pair's infection times.

    Sums the probability that ``i`` is infected first before ``t`` and the
    probability that ``j`` is infected first at ``u < t`` and ``i`` follows
    before ``t``. This route never touches the controlled outcome, so it is
    an independent check on :func:`natural_outcome` with ``x_j' = x_j``.
    """
    l = _as_pair(l)
    partner = 3 - subject
    fac = _factors(spec, x, l, subject)
    c_i = fac.c_i
    c_j = external_multiplier(spec, x[1], l[1], partner)

    def integrand(u):
        a_u = spec.alpha(u)
        s_i = np.exp(-c_i * _cum_alpha(spec, u))
        s_j = np.exp(-c_j * _cum_alpha(spec, u))
        first = c_i * a_u * s_i * s_j
        follow = c_j * a_u * s_j * s_i * -np.expm1(-_increment(spec, fac, t, u))
        return first + follow

    if t == 0:
        return np.zeros(np.broadcast(c_i, c_j).shape) if np.ndim(c_i) or np.ndim(c_j) else 0.0
    return _quad(integrand, t, "observed risk")


def secondary_attack_parts(spec, t, x, l, subject=1):
    """Numerator and denominator of the secondary attack rate given ``L = l``.

    Numerator ``int_0^t Pr(T_i < t | W_j = u, W_i > u) (1 - F_i(u)) dF_j(u)``,
    denominator ``int_0^t (1 - F_i(u)) dF_j(u)``.
    """
    l = _as_pair(l)
    partner = 3 - subject
    fac = _factors(spec, x, l, subject)
    c_j = external_multiplier(spec, x[1], l[1], partner)

    def integrand(u):
        alive = np.exp(-fac.c_i * _cum_alpha(spec, u))
        dens = _density(spec, c_j, u) * alive
        follow = -np.expm1(-_increment(spec, fac, t, u))
        return np.stack(np.broadcast_arrays(follow * dens, dens))

    if t == 0:
        zero = np.zeros(np.broadcast(fac.c_i, c_j).shape)
        return zero, zero
    out = _quad(integrand, t, "secondary attack rate")
    return out[0], out[1]


def asymmetric_outcome(spec, t, x, x_j_prime, l, subject=1):
    """Outcome of a home-bound subject whose partner's infection time follows ``W_j(x_j')``.

    With no external hazard for ``i`` the outcome is
    ``int_0^t Pr(Z_i < t - w | w, x) dF_j(w | x_j')``.
    """
    if spec.per_subject_alpha_scale[subject - 1] != 0:
        raise InputError(f"subject {subject} is not home-bound (per_subject_alpha_scale must be 0)")
    l = _as_pair(l)
    partner = 3 - subject
    x_i, x_j = x
    d = internal_multiplier(spec, x_i, x_j, l[0], l[1])
    c_j = external_multiplier(spec, x_j_prime, l[1], partner)

    def integrand(w):
        return -np.expm1(-d * _cum_gamma(spec, t - w)) * _density(spec, c_j, w)

    if t == 0:
        return np.zeros_like(np.asarray(d, dtype=float))
    return _quad(integrand, t, "asymmetric outcome")


# ---------------------------------------------------------------------------
# Monte Carlo over covariates


class MCResult(NamedTuple):
    value: float
    se: float


def standardize(spec, inner, covariate_law, n_draws=DEFAULT_DRAWS, seed=0):
    """Average ``inner`` over the covariate law by seeded Monte Carlo.

    ``inner`` receives a :class:`CovariatePair` of (n, dim) arrays for
    subjects 1 and 2 and returns one value per draw. Returns the mean and its
    Monte Carlo standard error.
    """
    if n_draws < 1:
        raise InputError("n_draws must be >= 1")
    if isinstance(covariate_law, PointLaw):
        n_draws = 1
    l1, l2 = draw_covariates(covariate_law, n_draws, seed)
    mc = Influence.mean(inner(CovariatePair(l1, l2)))
    return MCResult(mc.value, mc.se)


class TruthEngine:
    """Ground-truth estimands for one hazard model, design and covariate law.

    Covariate draws are made once at construction; per-draw conditional
    quantities are cached, so evaluating many estimands on the same engine
    costs one quadrature per distinct (t, treatment) combination.
    """

    def __init__(self, spec, design=None, covariate_law=None, n_draws=DEFAULT_DRAWS, seed=0, subject=1):
        self.spec = spec
        self.design = design or AssignmentDesign("bernoulli")
        self.covariate_law = covariate_law or PointLaw((0.0,) * spec.dim, (0.0,) * spec.dim)
        if self.covariate_law.dim != spec.dim:
            raise InputError(f"covariate law has dimension {self.covariate_law.dim}, spec expects {spec.dim}")
        if subject not in (1, 2):
            raise InputError("subject must be 1 or 2")
        self.subject = subject
        self._requested_draws = int(n_draws)
        if isinstance(self.covariate_law, PointLaw):
            n_draws = 1
        elif spec.covariates_inert and self.design.randomized:
            n_draws = 1
        self.n_draws = int(n_draws)
        self.seed = seed
        l1, l2 = draw_covariates(self.covariate_law, self.n_draws, seed)
        if spec.covariates_inert and self.design.randomized:
            l1 = np.zeros_like(l1)
            l2 = np.zeros_like(l2)
        self.l = (l1, l2) if subject == 1 else (l2, l1)
        self._cache = {}

    def with_design(self, design):
        """An engine for another assignment design sharing these draws and caches.

        Conditional outcomes do not depend on the design, only the weights do.
        """
        if not (design.randomized or self.n_draws > 1 or isinstance(self.covariate_law, PointLaw)):
            return TruthEngine(self.spec, design, self.covariate_law, self._requested_draws, self.seed, self.subject)
        other = object.__new__(TruthEngine)
        other.__dict__.update(self.__dict__)
        other.design = design
        return other

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = np.atleast_1d(np.asarray(fn(), dtype=float))
        return self._cache[key]

    # per-draw conditional quantities

    def controlled(self, t, w_j, x_i, x_j):
        return self._cached(
            ("ctrl", t, w_j, x_i, x_j), lambda: controlled_outcome(self.spec, t, w_j, (x_i, x_j), self.l, self.subject)
        )

    def natural(self, t, x_i, x_j, x_j_prime):
        return self._cached(
            ("nat", t, x_i, x_j, x_j_prime),
            lambda: natural_outcome(self.spec, t, (x_i, x_j), x_j_prime, self.l, self.subject),
        )

    def risk(self, t, x_i, x_j):
        return self._cached(("risk", t, x_i, x_j), lambda: observed_risk(self.spec, t, (x_i, x_j), self.l, self.subject))

    def sar_parts(self, t, x_i, x_j):
        key = ("sar", t, x_i, x_j)
        if key not in self._cache:
            num, den = secondary_attack_parts(self.spec, t, (x_i, x_j), self.l, self.subject)
            self._cache[key] = (np.atleast_1d(num), np.atleast_1d(den))
        return self._cache[key]

    def asymmetric(self, t, x_i, x_j, x_j_prime):
        return self._cached(
            ("asym", t, x_i, x_j, x_j_prime),
            lambda: asymmetric_outcome(self.spec, t, (x_i, x_j), x_j_prime, self.l, self.subject),
        )

    def weight(self, x_i, x_j):
        w = self.design.prob(x_i, x_j, self.l[0], self.l[1])
        return np.broadcast_to(np.asarray(w, dtype=float), (self.n_draws,))

    # estimands

    def _attack_rate(self, t, x_i, x_j=None):
        partners = (0, 1) if x_j is None else (x_j,)
        num = sum(self.weight(x_i, xj) * self.risk(t, x_i, xj) for xj in partners)
        den = sum(self.weight(x_i, xj) for xj in partners)
        if not np.any(den > 0):
            raise UndefinedEstimandError(
                f"AR with x_i={x_i}, x_j={x_j} is not identified under {self.design.kind} assignment"
            )
        return Influence.ratio_of_means(num, den, "attack rate")

    def _sar(self, t, x_i, x_j):
        num, den = self.sar_parts(t, x_i, x_j)
        w = self.weight(x_i, x_j)
        if not np.any(w > 0):
            raise UndefinedEstimandError(
                f"SAR with x=({x_i}, {x_j}) is not identified under {self.design.kind} assignment"
            )
        return Influence.ratio_of_means(w * num, w * den, "secondary attack rate")

    def _compute(self, r):
        t, k = r.t, r.kind
        m = Influence.mean
        if k == "Y_controlled":
            return m(self.controlled(t, r.w_j, r.x_i, r.x_j))
        if k == "Y_natural":
            xp = r.x_j if r.x_j_prime is None else r.x_j_prime
            return m(self.natural(t, r.x_i, r.x_j, xp))
        if k == "CE_controlled":
            return m(self.controlled(t, r.w_j, r.x_i, r.x_j) - self.controlled(t, r.w_j_prime, r.x_i, r.x_j))
        if k == "CE_natural":
            return m(self.natural(t, r.x_i, r.x_j, 0) - self.natural(t, r.x_i, r.x_j, 1))
        if k == "SE_controlled":
            return m(self.controlled(t, r.w_j, 1, r.x_j) - self.controlled(t, r.w_j, 0, r.x_j))
        if k == "SE_natural":
            return m(self.natural(t, 1, r.x_j, r.x_j) - self.natural(t, 0, r.x_j, r.x_j))
        if k == "IE_controlled":
            return m(self.controlled(t, r.w_j, r.x_i, 1) - self.controlled(t, r.w_j, r.x_i, 0))
        if k == "IE_natural":
            xp = 0 if r.x_j_prime is None else r.x_j_prime
            return m(self.natural(t, r.x_i, 1, xp) - self.natural(t, r.x_i, 0, xp))
        if k == "AR":
            return self._attack_rate(t, r.x_i, r.x_j)
        if k == "DE":
            return self._attack_rate(t, 1) - self._attack_rate(t, 0)
        if k == "VE_AR":
            return self._attack_rate(t, 1).one_minus_ratio(self._attack_rate(t, 0), "VE_AR")
        if k == "IDE":
            return self._attack_rate(t, 0, 1) - self._attack_rate(t, 0, 0)
        if k == "SAR":
            return self._sar(t, r.x_i, r.x_j)
        if k == "VE_I_net":
            return self._sar(t, 0, 1).one_minus_ratio(self._sar(t, 0, 0), "VE_I_net")
        if k == "VE_I_asym":
            return m(self.asymmetric(t, 0, 1, 1) - self.asymmetric(t, 0, 0, 1))
        if k == "VE_C_asym":
            return m(self.asymmetric(t, 0, 0, 1) - self.asymmetric(t, 0, 0, 0))
        raise InputError(f"unhandled estimand {k}")  # pragma: no cover

    def evaluate(self, request):
        if request.kind in ("VE_I_asym", "VE_C_asym") and self.spec.per_subject_alpha_scale[self.subject - 1] != 0:
            raise InputError(f"{request.kind} needs a home-bound subject {self.subject} (zero external scale)")
        mc = self._compute(request)
        return EstimandValue(
            request,
            mc.value,
            mc.se,
            "truth",
            {"n_draws": self.n_draws, "design": self.design.kind, "subject": self.subject},
        )

    def __call__(self, kind, t, **args):
        return self.evaluate(EstimandRequest(kind, t, **args))


def estimand(spec, design, request, covariate_law=None, n_draws=DEFAULT_DRAWS, seed=0, subject=1):
    """Evaluate one estimand request against the hazard model."""
    return TruthEngine(spec, design, covariate_law, n_draws, seed, subject).evaluate(request)


__all__ = [
    "ESTIMAND_KINDS",
    "EstimandRequest",
    "EstimandValue",
    "MCResult",
    "TruthEngine",
    "asymmetric_outcome",
    "controlled_outcome",
    "estimand",
    "initial_cdf",
    "natural_outcome",
    "observed_risk",
    "secondary_attack_parts",
    "standardize",
]
