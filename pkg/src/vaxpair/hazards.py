"""Transmission hazards for a two-person partnership.

Each subject faces an external force of infection

    lambda_W(t; x_i, l_i) = s_i * alpha(t) * exp(beta0 * x_i + theta0 . l_i)

until the first infection in the pair. Once the partner is infected at
``w_j`` the survivor's hazard becomes

    lambda_Z(t; w_j, x, l) = lambda_W(t; x_i, l_i)
                             + gamma(t - w_j) * exp(beta1 * x_i + sigma * x_j
                                                    + theta1 . l_j + theta2 . l_i)

Baselines come from three families (constant, seasonal sinusoid and
exponentially decaying) that all integrate in closed form, so cumulative
hazards and their inverses never need quadrature unless the caller supplies
an arbitrary callable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate, optimize

from .errors import InputError, NumericError

QUAD_EPSABS = 1e-10
ROOT_RTOL = 1e-10

BASELINE_KINDS = ("constant", "sinusoidal", "exp_decay")


@dataclass(frozen=True)
class BaselineHazard:
    """A baseline hazard from one of the closed-form families.

    ``constant``: ``params = (rate,)``;
    ``sinusoidal``: ``params = (a, phase)`` giving ``a (1 + sin(2 pi t + phase))``;
    ``exp_decay``: ``params = (b, omega)`` giving ``b exp(-omega s)``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in BASELINE_KINDS:
            raise InputError(f"unknown baseline kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        expected = 1 if self.kind == "constant" else 2
        if len(params) != expected:
            raise InputError(f"{self.kind} baseline takes {expected} parameter(s), got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise InputError(f"non-finite baseline parameter in {params}")
        if params[0] < 0:
            raise InputError(f"{self.kind} baseline amplitude must be >= 0, got {params[0]}")
        if self.kind == "exp_decay" and params[1] < 0:
            raise InputError(f"exp_decay rate omega must be >= 0, got {params[1]}")
        object.__setattr__(self, "params", params)

    @classmethod
    def constant(cls, rate):
        return cls("constant", (rate,))

    @classmethod
    def sinusoidal(cls, a, phase):
        return cls("sinusoidal", (a, phase))

    @classmethod
    def exp_decay(cls, b, omega):
        return cls("exp_decay", (b, omega))

    @property
    def is_zero(self):
        return self.params[0] == 0.0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            out = np.full_like(s, self.params[0])
        elif self.kind == "sinusoidal":
            a, phase = self.params
            out = a * (1.0 + np.sin(2.0 * np.pi * s + phase))
        else:
            b, omega = self.params
            out = b * np.exp(-omega * s)
        return out if out.ndim else float(out)

    def cumulative(self, s0, s1):
        """Integral of the baseline over ``[s0, s1]`` (vectorized)."""
        s0 = np.asarray(s0, dtype=float)
        s1 = np.asarray(s1, dtype=float)
        if self.kind == "constant":
            out = self.params[0] * (s1 - s0)
        elif self.kind == "sinusoidal":
            a, phase = self.params
            two_pi = 2.0 * np.pi
            out = a * ((s1 - s0) + (np.cos(two_pi * s0 + phase) - np.cos(two_pi * s1 + phase)) / two_pi)
        else:
            b, omega = self.params
            span = s1 - s0
            x = omega * span
            # two-term series below 1e-8 avoids dividing by subnormal omega
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(x > 1e-8, -np.expm1(-x) / omega, span * (1.0 - 0.5 * x))
            out = b * np.exp(-omega * s0) * ratio
        out = np.asarray(out)
        return out if out.ndim else float(out)

    def tail_mass(self, s0):
        """Integral over ``[s0, inf)``; infinite unless the baseline decays."""
        if self.is_zero:
            return 0.0
        if self.kind == "exp_decay" and self.params[1] > 0:
            b, omega = self.params
            return (b / omega) * math.exp(-omega * s0)
        return math.inf

    def to_text(self):
        return f"{self.kind}(" + ", ".join(repr(p) for p in self.params) + ")"

    @classmethod
    def from_text(cls, text):
        text = text.strip()
        if not text.endswith(")") or "(" not in text:
            raise InputError(f"baseline must look like kind(p1, ...), got {text!r}")
        kind, _, rest = text[:-1].partition("(")
        try:
            params = tuple(float(p) for p in rest.split(",") if p.strip())
        except ValueError as exc:
            raise InputError(f"bad baseline parameters in {text!r}") from exc
        return cls(kind.strip(), params)


ZERO = BaselineHazard.constant(0.0)


def _as_theta(value):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1:
        raise InputError("covariate coefficients must be a scalar or a 1-d vector")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class HazardSpec:
    """Full parameterization of the partnership transmission model.

    Coefficients are on the log scale; ``beta0 = -inf`` is allowed and means
    treatment removes the external hazard entirely. ``per_subject_alpha_scale``
    multiplies each subject's external baseline; ``(0, 1)`` makes subject 1
    home-bound. ``external_covariates_in_internal`` keeps ``theta0 . l_i`` in
    the external part of the post-infection hazard (set False to drop it).
    """

    alpha: BaselineHazard
    gamma: BaselineHazard = ZERO
    beta0: float = 0.0
    beta1: float = 0.0
    sigma: float = 0.0
    theta0: Sequence[float] = (0.0,)
    theta1: Sequence[float] = (0.0,)
    theta2: Sequence[float] = (0.0,)
    per_subject_alpha_scale: tuple = (1.0, 1.0)
    external_covariates_in_internal: bool = True

    def __post_init__(self):
        for name in ("theta0", "theta1", "theta2"):
            object.__setattr__(self, name, _as_theta(getattr(self, name)))
        dims = {len(self.theta0), len(self.theta1), len(self.theta2)}
        if len(dims) != 1:
            raise InputError("theta0, theta1 and theta2 must share one dimension")
        for name in ("theta0", "theta1", "theta2", "beta1", "sigma"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InputError(f"{name} must be finite")
        if np.isnan(self.beta0) or self.beta0 == math.inf:
            raise InputError("beta0 must be finite or -inf")
        scale = tuple(float(s) for s in self.per_subject_alpha_scale)
        if len(scale) != 2 or any(s < 0 or not math.isfinite(s) for s in scale):
            raise InputError("per_subject_alpha_scale must be two finite values >= 0")
        object.__setattr__(self, "per_subject_alpha_scale", scale)
        object.__setattr__(self, "beta0", float(self.beta0))
        object.__setattr__(self, "beta1", float(self.beta1))
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def dim(self):
        return len(self.theta0)

    @property
    def covariates_inert(self):
        return not any(self.theta0 + self.theta1 + self.theta2)

    @property
    def contagious(self):
        return not self.gamma.is_zero

    @property
    def asymmetric(self):
        return 0.0 in self.per_subject_alpha_scale

    def with_(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


def _check_subject(subject):
    if subject not in (1, 2):
        raise InputError(f"subject must be 1 or 2, got {subject!r}")
    return subject - 1


def _dot(theta, l):
    """``theta . l`` for a single covariate vector or a stack of them."""
    theta = np.asarray(theta)
    l = np.asarray(l, dtype=float)
    if not np.all(np.isfinite(l)):
        raise InputError("covariates must be finite")
    if theta.size == 1 and (l.ndim == 0 or l.shape[-1] != 1):
        return l * theta[0]
    if l.shape[-1] != theta.size:
        raise InputError(f"covariate dimension {l.shape[-1]} does not match coefficients ({theta.size})")
    return l @ theta


def _treatment_factor(beta, x):
    # exp(beta * x) with exp(-inf * 0) = 1
    x = np.asarray(x)
    return np.where(x != 0, np.exp(beta), 1.0)


def external_multiplier(spec, x_i, l_i, subject=1):
    """Multiplier of ``alpha(t)`` in a subject's external hazard."""
    k = _check_subject(subject)
    out = spec.per_subject_alpha_scale[k] * _treatment_factor(spec.beta0, x_i) * np.exp(_dot(spec.theta0, l_i))
    return out if np.ndim(out) else float(out)


def internal_multiplier(spec, x_i, x_j, l_i, l_j):
    """Multiplier of ``gamma(t - w_j)`` in the post-infection hazard."""
    out = (
        _treatment_factor(spec.beta1, x_i)
        * np.exp(spec.sigma * np.asarray(x_j, dtype=float))
        * np.exp(_dot(spec.theta1, l_j) + _dot(spec.theta2, l_i))
    )
    return out if np.ndim(out) else float(out)


def internal_external_multiplier(spec, x_i, l_i, subject=1):
    """External multiplier as it enters the post-infection hazard."""
    if spec.external_covariates_in_internal:
        return external_multiplier(spec, x_i, l_i, subject)
    k = _check_subject(subject)
    out = spec.per_subject_alpha_scale[k] * _treatment_factor(spec.beta0, x_i)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class Hazard:
    """A hazard ``h(u) = sum_k coef_k * baseline_k(u - shift_k)`` for ``u >= shift_k``.

    This is the handle passed to :func:`cumulative_hazard` and
    :func:`invert_cumulative_hazard`; every term integrates in closed form.
    """

    terms: tuple = field(default_factory=tuple)

    def __add__(self, other):
        return Hazard(self.terms + other.terms)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for coef, base, shift in self.terms:
            if coef:
                s = u - shift
                out = out + np.where(s >= 0, coef * base(np.maximum(s, 0.0)), 0.0)
        return out if out.ndim else float(out)

    def cumulative(self, t0, t1):
        total = 0.0
        for coef, base, shift in self.terms:
            if coef == 0 or base.is_zero:
                continue
            s0 = max(t0 - shift, 0.0)
            s1 = max(t1 - shift, 0.0)
            if s1 > s0:
                total += coef * base.cumulative(s0, s1)
        return total

    def tail_mass(self, t0):
        total = 0.0
        for coef, base, shift in self.terms:
            if coef == 0 or base.is_zero:
                continue
            total += coef * base.tail_mass(max(t0 - shift, 0.0)) if coef > 0 else 0.0
        return total


def external_hazard_fn(spec, x_i, l_i, subject=1):
    """Hazard handle for a subject's external infection time."""
    return Hazard(((external_multiplier(spec, x_i, l_i, subject), spec.alpha, 0.0),))


def internal_hazard_fn(spec, w_j, x, l, subject=1):
    """Hazard handle for the survivor after the partner's infection at ``w_j``.

    ``x`` and ``l`` are ordered (own, partner).
    """
    x_i, x_j = x
    l_i, l_j = l
    c = internal_external_multiplier(spec, x_i, l_i, subject)
    d = internal_multiplier(spec, x_i, x_j, l_i, l_j)
    return Hazard(((c, spec.alpha, 0.0), (d, spec.gamma, float(w_j))))


def external_hazard(spec, t, x_i, l_i, subject=1):
    """External infection hazard at time ``t``."""
    if np.any(np.asarray(t) < 0):
        raise InputError("time must be >= 0")
    out = external_multiplier(spec, x_i, l_i, subject) * spec.alpha(t)
    return out if np.ndim(out) else float(out)


def internal_hazard(spec, t, w_j, x, l, subject=1):
    """Post-infection hazard at ``t > w_j``; ``x`` and ``l`` are (own, partner)."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= w_j) or w_j < 0:
        raise InputError(f"internal hazard needs t > w_j >= 0 (t={t}, w_j={w_j})")
    x_i, x_j = x
    l_i, l_j = l
    ext = internal_external_multiplier(spec, x_i, l_i, subject) * spec.alpha(t)
    out = ext + internal_multiplier(spec, x_i, x_j, l_i, l_j) * spec.gamma(t - w_j)
    return out if np.ndim(out) else float(out)


HazardLike = Union[Hazard, BaselineHazard, Callable[[float], float]]


def cumulative_hazard(h: HazardLike, t0: float, t1: float) -> float:
    """Integral of ``h`` over ``[t0, t1]``.

    Closed form for :class:`Hazard` and :class:`BaselineHazard`; adaptive
    Gauss-Kronrod quadrature for any other callable.
    """
    if not (0 <= t0 <= t1):
        raise InputError(f"need 0 <= t0 <= t1, got t0={t0}, t1={t1}")
    if isinstance(h, (Hazard, BaselineHazard)):
        return float(h.cumulative(t0, t1))
    if t1 == t0:
        return 0.0
    value, err = integrate.quad(h, t0, t1, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSABS, limit=500)
    if not math.isfinite(value) or err > 1e3 * QUAD_EPSABS * max(1.0, abs(value)):
        raise NumericError(f"quadrature of hazard on [{t0}, {t1}] did not converge (value={value}, err={err})")
    return float(value)


def _tail_mass(h, t0):
    if isinstance(h, (Hazard, BaselineHazard)):
        return h.tail_mass(t0)
    return math.inf


def invert_cumulative_hazard(h: HazardLike, t0: float, target: float, max_time: float = 1e8) -> float:
    """Smallest ``t1 >= t0`` whose cumulative hazard from ``t0`` equals ``target``.

    Returns ``inf`` when the hazard's remaining mass is below ``target``. For
    generic callables the bracket search gives up at ``max_time`` and also
    returns ``inf``.
    """
    if target < 0 or not math.isfinite(target):
        raise InputError(f"target must be finite and >= 0, got {target}")
    if target == 0:
        return float(t0)
    if _tail_mass(h, t0) < target:
        return math.inf

    def gap(s):
        return cumulative_hazard(h, t0, s) - target

    step = 1.0
    hi = t0 + step
    while gap(hi) < 0:
        step *= 2.0
        hi = t0 + step
        if step > max_time:
            return math.inf
    lo = t0 if step == 1.0 else t0 + step / 2.0
    try:
        root, info = optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=ROOT_RTOL, full_output=True, maxiter=500)
    except (ValueError, RuntimeError) as exc:
        raise NumericError(f"root finding failed on [{lo}, {hi}] for target {target}: {exc}") from exc
    if not info.converged:
        raise NumericError(f"brentq did not converge: {info.flag} after {info.iterations} iterations")
    return float(root)


def invert_monotone_many(cum, lo, hi, target, rtol=ROOT_RTOL):
    """Vectorized bisection for ``cum(t, idx) = target`` on ``[lo, hi]``.

    ``cum(t, idx)`` returns cumulative hazards for the elements listed in the
    integer array ``idx`` evaluated at times ``t`` (same length as ``idx``) and
    must be nondecreasing in ``t``. Elements whose target exceeds the mass
    available on ``[lo, hi]`` come back as ``inf``.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), lo.shape).copy()
    target = np.broadcast_to(np.asarray(target, dtype=float), lo.shape)
    out = np.full(lo.shape, np.inf)
    everyone = np.arange(lo.size)
    idx = everyone[cum(hi, everyone) >= target]
    if idx.size == 0:
        return out
    a, b, tgt = lo[idx], hi[idx], target[idx]
    for _ in range(200):
        if np.all(b - a <= rtol * np.maximum(1.0, np.abs(b))):
            break
        mid = 0.5 * (a + b)
        below = cum(mid, idx) < tgt
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    else:
        raise NumericError("vectorized bisection did not converge")
    out[idx] = b
    return out
