"""Simulated partnership trials from the competing-risks transmission model.

Sampling is two-stage. The first infection in a pair comes from the total
external hazard, and is attributed to a subject in proportion to the two
external hazards. The survivor's remaining time then comes from the
post-infection hazard. Every partnership draws its uniforms from its own
counter-based substream, so chunked and threaded runs agree with a serial run
bit for bit.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .design import (
    AssignmentDesign,
    BivariateNormalLaw,
    CovariatePair,
    PointLaw,
    assign_treatments,
    draw_covariates,
    stride_for,
)
from .errors import InputError
from .hazards import (
    HazardSpec,
    external_hazard_fn,
    external_multiplier,
    internal_external_multiplier,
    internal_hazard_fn,
    internal_multiplier,
    invert_cumulative_hazard,
    invert_monotone_many,
)
from .rng import uniform_block

log = logging.getLogger(__name__)

CHUNK = 16_384
THREADS_ENV = "VAXPAIR_THREADS"


@dataclass(frozen=True)
class Scenario:
    """A named, reproducible experiment."""

    name: str
    spec: HazardSpec
    design: AssignmentDesign = field(default_factory=AssignmentDesign)
    covariate_law: object = field(default_factory=PointLaw)
    n: int = 100_000
    tau: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InputError(f"n must be a positive integer, got {self.n}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise InputError(f"tau must be finite and > 0, got {self.tau}")
        if self.covariate_law.dim != self.spec.dim:
            raise InputError(
                f"covariate law has dimension {self.covariate_law.dim} but the hazard coefficients have {self.spec.dim}"
            )
        if int(self.seed) != self.seed or self.seed < 0 or self.seed >= 2**64:
            raise InputError(f"seed must be an integer in [0, 2**64), got {self.seed}")

    def with_(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class PartnershipRecord:
    """One simulated partnership.

    Censored times are stored as ``tau`` with the matching ``c`` flag set.
    ``first`` is 1 or 2 for the first-infected subject, 0 when neither was
    infected before ``tau``.
    """

    id: int
    l: CovariatePair
    x: tuple
    t1: float
    c1: int
    t2: float
    c2: int
    first: int = 0

    @property
    def first_infected(self):
        return self.first or None

    @property
    def w_first(self):
        if self.first == 1:
            return self.t1
        if self.first == 2:
            return self.t2
        return None


@dataclass
class TrialData:
    """Columnar trial dataset, sorted by partnership id.

    ``l1`` and ``l2`` have shape (n, dim); the rest are length-n vectors.
    """

    ids: np.ndarray
    l1: np.ndarray
    l2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    t1: np.ndarray
    c1: np.ndarray
    t2: np.ndarray
    c2: np.ndarray
    first: np.ndarray
    tau: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.ids)
        for name in ("x1", "x2", "t1", "c1", "t2", "c2", "first"):
            if len(getattr(self, name)) != n:
                raise InputError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        self.l1 = np.asarray(self.l1, dtype=float).reshape(n, -1)
        self.l2 = np.asarray(self.l2, dtype=float).reshape(n, -1)

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.l1.shape[1]

    def __getitem__(self, k):
        return PartnershipRecord(
            int(self.ids[k]),
            CovariatePair(self.l1[k].copy(), self.l2[k].copy()),
            (int(self.x1[k]), int(self.x2[k])),
            float(self.t1[k]),
            int(self.c1[k]),
            float(self.t2[k]),
            int(self.c2[k]),
            int(self.first[k]),
        )

    def records(self):
        for k in range(len(self)):
            yield self[k]

    @classmethod
    def from_columns(cls, ids, l1, l2, x1, x2, t1, c1, t2, c2, tau, metadata=None):
        """Build a dataset from observed columns, deriving the infection order from the times."""
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        c1 = np.asarray(c1, dtype=np.int8)
        c2 = np.asarray(c2, dtype=np.int8)
        if np.any(t1 <= 0) or np.any(t2 <= 0):
            raise InputError("event times must be > 0")
        if np.any((c1 == 0) & (t1 >= tau)) or np.any((c2 == 0) & (t2 >= tau)):
            raise InputError("uncensored times must be < tau")
        inf1 = c1 == 0
        inf2 = c2 == 0
        # exact ties after rounding go to subject 1
        first = np.where(inf1 & (~inf2 | (t1 <= t2)), 1, np.where(inf2, 2, 0)).astype(np.int8)
        order = np.argsort(ids, kind="stable")
        take = lambda a: np.asarray(a)[order]  # noqa: E731
        return cls(
            take(ids).astype(np.int64),
            take(np.asarray(l1, dtype=float).reshape(len(t1), -1)),
            take(np.asarray(l2, dtype=float).reshape(len(t1), -1)),
            take(x1).astype(np.int8),
            take(x2).astype(np.int8),
            take(t1),
            take(c1),
            take(t2),
            take(c2),
            take(first),
            float(tau),
            dict(metadata or {}),
        )

    def equals(self, other):
        cols = ("ids", "l1", "l2", "x1", "x2", "t1", "c1", "t2", "c2", "first")
        return self.tau == other.tau and all(np.array_equal(getattr(self, c), getattr(other, c)) for c in cols)


def default_threads():
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return 1
    try:
        n = int(value)
    except ValueError as exc:
        raise InputError(f"{THREADS_ENV} must be an integer, got {value!r}") from exc
    return max(n, 1)


def simulate_partnership(spec, x, l, tau, rng):
    """Scalar reference sampler for a single partnership.

    Uses :func:`~vaxpair.hazards.invert_cumulative_hazard` directly; the
    vectorized :func:`simulate_trial` implements the same two stages.
    ``rng`` is a :class:`numpy.random.Generator`.
    """
    if not (tau > 0):
        raise InputError("tau must be > 0")
    x1, x2 = x
    l1, l2 = (np.asarray(v, dtype=float) for v in l)
    h1 = external_hazard_fn(spec, x1, l1, 1)
    h2 = external_hazard_fn(spec, x2, l2, 2)
    e1, u_attr, e2 = rng.exponential(), rng.random(), rng.exponential()
    w = invert_cumulative_hazard(h1 + h2, 0.0, e1)
    if w >= tau:
        return PartnershipRecord(0, CovariatePair(l1, l2), (x1, x2), tau, 1, tau, 1, 0)
    c1 = h1.terms[0][0]
    c2 = h2.terms[0][0]
    first = 1 if u_attr * (c1 + c2) < c1 else 2
    if first == 1:
        hz = internal_hazard_fn(spec, w, (x2, x1), (l2, l1), 2)
    else:
        hz = internal_hazard_fn(spec, w, (x1, x2), (l1, l2), 1)
    s = invert_cumulative_hazard(hz, w, e2)
    later, lc = (s, 0) if s < tau else (tau, 1)
    if first == 1:
        return PartnershipRecord(0, CovariatePair(l1, l2), (x1, x2), w, 0, later, lc, 1)
    return PartnershipRecord(0, CovariatePair(l1, l2), (x1, x2), later, lc, w, 0, 2)


def _first_event(spec, c_tot, e1, tau):
    # solve c_tot * A(w) = e1 on [0, tau]; inf when no event by tau
    alpha = spec.alpha
    if alpha.kind == "constant":
        with np.errstate(divide="ignore"):
            w = e1 / (c_tot * alpha.params[0])
        return np.where(w < tau, w, np.inf)
    zeros = np.zeros_like(e1)
    return invert_monotone_many(lambda t, idx: c_tot[idx] * alpha.cumulative(0.0, t), zeros, tau, e1)


def _second_event(spec, w, cz, d, e2, tau):
    # solve cz * (A(t) - A(w)) + d * Gamma(t - w) = e2 on [w, tau]
    alpha, gamma = spec.alpha, spec.gamma
    if alpha.kind == "constant" and gamma.kind == "constant":
        rate = cz * alpha.params[0] + d * gamma.params[0]
        with np.errstate(divide="ignore"):
            t = w + e2 / rate
        return np.where(t < tau, t, np.inf)

    def cum(t, idx):
        w_ = w[idx]
        out = cz[idx] * (alpha.cumulative(0.0, t) - alpha.cumulative(0.0, w_))
        return out + d[idx] * gamma.cumulative(0.0, np.maximum(t - w_, 0.0))

    return invert_monotone_many(cum, w, tau, e2)


def _simulate_chunk(scenario, start, stop, latent_minimum):
    spec = scenario.spec
    p = spec.dim
    u = uniform_block(scenario.seed, start, stop, stride_for(p))
    l1, l2 = scenario.covariate_law.from_normals(ndtri(u[:, : 2 * p]))
    x1, x2 = scenario.design.assign(u[:, 2 * p], u[:, 2 * p + 1], l1, l2)
    e1 = -np.log(u[:, 2 * p + 2])
    u_attr = u[:, 2 * p + 3]
    e2 = -np.log(u[:, 2 * p + 4])
    coin = u[:, 2 * p + 5]
    tau = scenario.tau

    c1 = np.broadcast_to(external_multiplier(spec, x1, l1, 1), x1.shape).astype(float)
    c2 = np.broadcast_to(external_multiplier(spec, x2, l2, 2), x1.shape).astype(float)
    if latent_minimum:
        # sample both latent external times and keep the earlier one
        w1 = _first_event(spec, c1, e1, tau)
        w2 = _first_event(spec, c2, -np.log(u_attr), tau)
        w = np.minimum(w1, w2)
        first = np.where(w1 <= w2, 1, 2)
    else:
        w = _first_event(spec, c1 + c2, e1, tau)
        first = np.where(u_attr * (c1 + c2) < c1, 1, 2)
    infected = np.isfinite(w)
    first = np.where(infected, first, 0)

    # survivor s, partner f
    s_is_2 = first == 1
    x_s = np.where(s_is_2, x2, x1)
    x_f = np.where(s_is_2, x1, x2)
    l_s = np.where(s_is_2[:, None], l2, l1)
    l_f = np.where(s_is_2[:, None], l1, l2)
    cz = np.where(
        s_is_2,
        internal_external_multiplier(spec, x_s, l_s, 2),
        internal_external_multiplier(spec, x_s, l_s, 1),
    )
    d = np.broadcast_to(internal_multiplier(spec, x_s, x_f, l_s, l_f), x1.shape).astype(float)

    later = np.full(len(w), np.inf)
    idx = np.flatnonzero(infected)
    if idx.size:
        later[idx] = _second_event(spec, w[idx], cz[idx], d[idx], e2[idx], tau)

    ties = infected & (later == w)
    n_ties = int(ties.sum())
    if n_ties:
        log.warning("%d exact tie(s) between infection times; ordering by coin flip", n_ties)
        first = np.where(ties, np.where(coin < 0.5, 1, 2), first)

    t_first = np.where(infected, w, tau)
    t_later = np.where(np.isfinite(later), later, tau)
    t1 = np.where(first == 2, t_later, t_first)
    t2 = np.where(first == 2, t_first, t_later)
    c1_flag = np.where(first == 1, 0, np.where(first == 2, ~np.isfinite(later), 1)).astype(np.int8)
    c2_flag = np.where(first == 2, 0, np.where(first == 1, ~np.isfinite(later), 1)).astype(np.int8)
    return dict(
        ids=np.arange(start, stop, dtype=np.int64),
        l1=l1,
        l2=l2,
        x1=x1,
        x2=x2,
        t1=t1,
        c1=c1_flag,
        t2=t2,
        c2=c2_flag,
        first=first.astype(np.int8),
        n_ties=n_ties,
    )


def simulate_trial(scenario, threads=None, latent_minimum=False, chunk=CHUNK):
    """Simulate ``scenario.n`` partnerships.

    Parameters
    ----------
    scenario : Scenario
    threads : int, optional
        Worker threads; defaults to the ``VAXPAIR_THREADS`` environment
        variable, else 1. Output does not depend on this value.
    latent_minimum : bool
        Sample both latent external times and take the minimum instead of
        attributing a single first event. Distributionally identical; kept
        for cross-validation of the default sampler.
    chunk : int
        Partnerships per work unit.

    Returns
    -------
    TrialData
    """
    threads = default_threads() if threads is None else max(int(threads), 1)
    bounds = [(s, min(s + chunk, scenario.n)) for s in range(0, scenario.n, chunk)]
    if threads == 1 or len(bounds) == 1:
        parts = [_simulate_chunk(scenario, a, b, latent_minimum) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: _simulate_chunk(scenario, ab[0], ab[1], latent_minimum), bounds))
    cols = {k: np.concatenate([p[k] for p in parts]) for k in parts[0] if k != "n_ties"}
    meta = scenario_metadata(scenario)
    meta["n_ties"] = sum(p["n_ties"] for p in parts)
    meta["sampler"] = "latent_minimum" if latent_minimum else "attribution"
    return TrialData(tau=scenario.tau, metadata=meta, **cols)


def scenario_metadata(scenario):
    """Plain-data description of a scenario, for dataset sidecars."""
    spec = scenario.spec
    law = scenario.covariate_law
    meta = {
        "name": scenario.name,
        "n": int(scenario.n),
        "tau": float(scenario.tau),
        "seed": int(scenario.seed),
        "design": scenario.design.kind,
        "alpha": spec.alpha.to_text(),
        "gamma": spec.gamma.to_text(),
        "beta0": spec.beta0,
        "beta1": spec.beta1,
        "sigma": spec.sigma,
        "theta0": list(spec.theta0),
        "theta1": list(spec.theta1),
        "theta2": list(spec.theta2),
        "per_subject_alpha_scale": list(spec.per_subject_alpha_scale),
        "external_covariates_in_internal": spec.external_covariates_in_internal,
    }
    if isinstance(law, BivariateNormalLaw):
        meta["covariates"] = {"law": law.kind, "v": law.v, "rho": law.rho, "dim": law.dim}
    else:
        meta["covariates"] = {"law": law.kind, "l1": list(law.l_1), "l2": list(law.l_2)}
    return meta


__all__ = [
    "PartnershipRecord",
    "Scenario",
    "TrialData",
    "assign_treatments",
    "draw_covariates",
    "scenario_metadata",
    "simulate_partnership",
    "simulate_trial",
]
