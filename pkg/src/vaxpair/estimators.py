"""Nonparametric plug-in estimators computed from trial data.

The external infection-time law comes from a cause-specific product-limit
estimator (the partner's first infection acts as censoring). The controlled
outcome conditions on the partner's infection time through a rectangular
window. The natural outcome sums windowed controlled outcomes over the
partner's estimated jumps. Covariates enter through equal-frequency bins
that are standardized to the empirical covariate distribution.

Records are oriented (own subject ``i``, partner ``j``). With
``subject=None`` both orientations of every partnership are pooled, which is
valid when the model treats the two subjects symmetrically; standard errors
are clustered on partnerships either way.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InputError, InsufficientDataError, UndefinedEstimandError
from .influence import Influence
from .truth import EstimandRequest, EstimandValue

WINDOW_POLICIES = ("widen", "error")


@dataclass(frozen=True)
class EstimatorConfig:
    """Smoothing and stratification choices.

    Attributes
    ----------
    wj_bandwidth : float or None
        Half-width of the window conditioning on the partner's infection time.
        ``None`` uses ``0.5 * m**(-1/5) * range`` over the partner-first
        infection times of the stratum (``m`` records).
    covariate_bins : int
        Equal-frequency bins per covariate dimension and subject; 0 disables
        adjustment.
    t_grid : tuple of float
        Default evaluation times.
    min_stratum_size : int
        Smallest usable stratum or window.
    window_policy : {"widen", "error"}
        What to do with a window holding fewer than ``min_stratum_size``
        records: widen to the nearest records, or raise.
    subject : {None, 1, 2}
        Orientation; ``None`` pools both.
    bootstrap : int
        Replicates for standard errors of controlled and natural estimands.
    seed : int
        Bootstrap seed.
    threads : int
        Workers for bootstrap replicates; results do not depend on it.
    """

    wj_bandwidth: Optional[float] = None
    covariate_bins: int = 0
    t_grid: tuple = (2.0,)
    min_stratum_size: int = 20
    window_policy: str = "widen"
    subject: Optional[int] = None
    bootstrap: int = 200
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.wj_bandwidth is not None and not (self.wj_bandwidth > 0):
            raise InputError(f"wj_bandwidth must be > 0, got {self.wj_bandwidth}")
        if int(self.covariate_bins) != self.covariate_bins or self.covariate_bins < 0:
            raise InputError(f"covariate_bins must be an integer >= 0, got {self.covariate_bins}")
        if self.min_stratum_size < 1:
            raise InputError("min_stratum_size must be >= 1")
        if self.window_policy not in WINDOW_POLICIES:
            raise InputError(f"window_policy must be one of {WINDOW_POLICIES}")
        if self.subject not in (None, 1, 2):
            raise InputError("subject must be None, 1 or 2")
        if self.bootstrap < 0:
            raise InputError("bootstrap must be >= 0")
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class SurvivalCurve:
    """Right-continuous step function on observed event times."""

    grid: np.ndarray
    values: np.ndarray
    kind: str = "cdf"
    strata: tuple = ()
    at_risk: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.kind not in ("cdf", "cum_hazard"):
            raise InputError(f"unknown curve kind {self.kind!r}")
        if len(self.grid) != len(self.values):
            raise InputError("grid and values differ in length")

    def __call__(self, t, left=False):
        """Curve value at ``t``; ``left=True`` gives the limit from the left."""
        side = "left" if left else "right"
        k = np.searchsorted(self.grid, t, side=side)
        vals = np.concatenate(([0.0], self.values))
        return vals[k]

    def jumps(self, upto=math.inf):
        keep = self.grid <= upto
        prev = np.concatenate(([0.0], self.values[:-1]))
        return self.grid[keep], (self.values - prev)[keep]


# ---------------------------------------------------------------------------
# oriented view of a dataset


class _Group:
    """Records of one (x_i, x_j, covariate cell) stratum, pre-sorted."""

    def __init__(self, view, idx):
        self.idx = idx
        m = view.m[idx]
        order = np.argsort(m, kind="stable")
        self.by_m = idx[order]
        m_sorted = m[order]
        self.times, self.starts = np.unique(m_sorted, return_index=True)
        jf = idx[view.fj[idx]]
        order = np.argsort(view.tj[jf], kind="stable")
        self.jfirst = jf[order]
        self.jfirst_times = view.tj[self.jfirst]


class _View:
    def __init__(self, data, subject, bins):
        n = len(data)
        self.n_pairs = n
        self.tau = data.tau
        inf1 = data.c1 == 0
        inf2 = data.c2 == 0
        m = np.where(data.first > 0, np.minimum(np.where(inf1, data.t1, np.inf), np.where(inf2, data.t2, np.inf)), data.tau)
        f1 = data.first == 1
        f2 = data.first == 2
        cols1 = (data.x1, data.x2, data.t1, inf1, data.t2, f1, f2, data.l1, data.l2)
        cols2 = (data.x2, data.x1, data.t2, inf2, data.t1, f2, f1, data.l2, data.l1)
        if subject == 1:
            parts, pair = [cols1], [np.arange(n)]
        elif subject == 2:
            parts, pair = [cols2], [np.arange(n)]
        else:
            parts, pair = [cols1, cols2], [np.arange(n), np.arange(n)]
        cat = lambda k: np.concatenate([p[k] for p in parts])  # noqa: E731
        self.xi, self.xj = cat(0).astype(np.int8), cat(1).astype(np.int8)
        self.ti, self.ii, self.tj = cat(2), cat(3), cat(4)
        self.fi, self.fj = cat(5), cat(6)
        li, lj = cat(7), cat(8)
        self.m = np.concatenate([m] * len(parts))
        self.pair = np.concatenate(pair)
        self.bins = int(bins)
        if self.bins:
            p = data.l1.shape[1]
            pooled = np.concatenate([data.l1, data.l2])
            qs = np.linspace(0, 1, self.bins + 1)[1:-1]
            edges = [np.quantile(pooled[:, d], qs) for d in range(p)]
            cell = np.zeros(len(self.m), dtype=np.int64)
            for d in range(p):
                cell = cell * self.bins + np.searchsorted(edges[d], li[:, d], side="right")
            for d in range(p):
                cell = cell * self.bins + np.searchsorted(edges[d], lj[:, d], side="right")
            self.cell = cell
            self.n_cells = self.bins ** (2 * p)
            self.dim = p
        else:
            self.cell = np.zeros(len(self.m), dtype=np.int64)
            self.n_cells = 1
            self.dim = data.l1.shape[1]
        self._groups = {}

    def pair_weights(self, w_pairs):
        if w_pairs is None:
            return np.ones(len(self.m))
        return np.asarray(w_pairs, dtype=float)[self.pair]

    def group(self, x_i, x_j, cell):
        key = (x_i, x_j, cell)
        if key not in self._groups:
            mask = (self.xi == x_i) & (self.xj == x_j)
            if cell is not None:
                mask &= self.cell == cell
            self._groups[key] = _Group(self, np.flatnonzero(mask))
        return self._groups[key]

    def cell_label(self, cell):
        if cell is None:
            return "all"
        digits = []
        for _ in range(2 * self.dim):
            digits.append(cell % self.bins)
            cell //= self.bins
        return "L" + "".join(str(d) for d in reversed(digits))


_VIEWS = {}


def _view(data, subject, bins):
    key = (id(data), subject, bins)
    hit = _VIEWS.get(key)
    if hit is None or hit[0] is not data:
        if len(_VIEWS) > 16:
            _VIEWS.clear()
        _VIEWS[key] = (data, _View(data, subject, bins))
    return _VIEWS[key][1]


def _cell_index(view, covariate_bin):
    if covariate_bin is None:
        return None
    if not view.bins:
        raise InputError("covariate_bin given but covariate_bins is 0")
    if isinstance(covariate_bin, (tuple, list)):
        if len(covariate_bin) != 2 * view.dim:
            raise InputError(f"covariate_bin needs {2 * view.dim} bin indices")
        cell = 0
        for b in covariate_bin:
            if not 0 <= b < view.bins:
                raise InputError(f"bin index {b} outside [0, {view.bins})")
            cell = cell * view.bins + int(b)
        return cell
    if not 0 <= covariate_bin < view.n_cells:
        raise InputError(f"covariate cell {covariate_bin} outside [0, {view.n_cells})")
    return int(covariate_bin)


def _stratum_name(view, x_i, x_j, cell):
    return f"x=({x_i},{x_j}) cell={view.cell_label(cell)}"


# ---------------------------------------------------------------------------
# initial (external) infection-time law


def _product_limit(view, g, w, cause, method="km"):
    """Cause-specific CDF of one stratum; returns (times, values, at_risk)."""
    rec = g.by_m
    wt = w[rec]
    ev = (view.fi if cause == "i" else view.fj)[rec]
    d = np.add.reduceat(wt * ev, g.starts) if len(rec) else np.zeros(0)
    tail = np.cumsum(wt[::-1])[::-1]
    risk = tail[g.starts] if len(rec) else np.zeros(0)
    keep = d > 0
    times, d, risk = g.times[keep], d[keep], risk[keep]
    if method == "km":
        values = 1.0 - np.cumprod(1.0 - d / risk)
    else:
        values = -np.expm1(-np.cumsum(d / risk))
    return times, values, risk


def _curve(view, g, w, cause, strata, method="km"):
    times, values, risk = _product_limit(view, g, w, cause, method)
    return SurvivalCurve(times, values, "cdf", strata, risk)


def _check_size(view, g, w, min_size, name):
    size = float(w[g.idx].sum())
    if size < max(min_size, 1):
        raise InsufficientDataError(f"stratum {name} holds {size:g} records (< {min_size})", stratum=name)
    return size


def estimate_initial_cdf(
    data, x_i, x_j_fixed, covariate_bin=None, subject=None, config=None, method="km", weights=None
):
    """Product-limit estimate of the external infection-time CDF of subject ``i``.

    Holds the partner's treatment at ``x_j_fixed``; infections of the partner
    first censor ``i``. ``method="na"`` exponentiates the Nelson-Aalen
    cumulative hazard instead.

    Raises
    ------
    InsufficientDataError
        If the stratum holds fewer than ``min_stratum_size`` records.
    """
    config = config or EstimatorConfig()
    if method not in ("km", "na"):
        raise InputError("method must be km or na")
    view = _view(data, subject, config.covariate_bins if covariate_bin is not None else 0)
    cell = _cell_index(view, covariate_bin)
    g = view.group(x_i, x_j_fixed, cell)
    w = view.pair_weights(weights)
    name = _stratum_name(view, x_i, x_j_fixed, cell)
    _check_size(view, g, w, config.min_stratum_size, name)
    return _curve(view, g, w, "i", (name,), method)


def initial_cdf_invariance(data, x_i, t_max, covariate_bin=None, subject=None, config=None):
    """Sup-distance on ``[0, t_max]`` between the CDF estimates holding ``x_j = 0`` and ``x_j = 1``.

    The external infection-time law does not depend on the partner's
    treatment, so this shrinks toward zero as the sample grows.
    """
    a = estimate_initial_cdf(data, x_i, 0, covariate_bin, subject, config)
    b = estimate_initial_cdf(data, x_i, 1, covariate_bin, subject, config)
    grid = np.union1d(a.grid, b.grid)
    grid = grid[grid <= t_max]
    if grid.size == 0:
        return 0.0
    return float(np.max(np.abs(a(grid) - b(grid))))


# ---------------------------------------------------------------------------
# controlled and natural outcomes


def _bandwidth(config, g_times):
    if config.wj_bandwidth is not None:
        return config.wj_bandwidth
    if len(g_times) < 2:
        return 0.5
    return 0.5 * len(g_times) ** (-0.2) * float(g_times[-1] - g_times[0])


def _window_means(view, g, w, t, centers, h, config):
    """Weighted mean of ``1{T_i < t}`` over partner-first records with ``|T_j - u| <= h``.

    Returns (means, counts, n_widened).
    """
    rec = g.jfirst
    tj = g.jfirst_times
    wt = w[rec]
    y = (view.ii[rec] & (view.ti[rec] < t)).astype(float)
    cw = np.concatenate(([0.0], np.cumsum(wt)))
    cy = np.concatenate(([0.0], np.cumsum(wt * y)))
    cn = np.arange(len(rec) + 1)
    lo = np.searchsorted(tj, centers - h, side="left")
    hi = np.searchsorted(tj, centers + h, side="right")
    counts = cn[hi] - cn[lo]
    wsum = cw[hi] - cw[lo]
    means = np.divide(cy[hi] - cy[lo], wsum, out=np.full(len(centers), np.nan), where=wsum > 0)
    k = config.min_stratum_size
    sparse = np.flatnonzero((counts < k) | (wsum <= 0))
    if sparse.size:
        if config.window_policy == "error" or len(rec) < k:
            u = centers[sparse[0]]
            raise InsufficientDataError(
                f"window around w_j={u:.6g} (half-width {h:.4g}) holds {counts[sparse[0]]} records (< {k})",
                stratum=f"w_j={u:.6g}",
            )
        for s in sparse:
            near = np.argpartition(np.abs(tj - centers[s]), k - 1)[:k]
            ws = wt[near]
            if ws.sum() <= 0:
                raise InsufficientDataError(f"no weighted records near w_j={centers[s]:.6g}", stratum=f"w_j={centers[s]:.6g}")
            means[s] = np.dot(ws, y[near]) / ws.sum()
            counts[s] = k
    return means, counts, int(sparse.size)


def _controlled(view, w, config, t, w_j, x, cell):
    x_i, x_j = x
    g = view.group(x_i, x_j, cell)
    name = _stratum_name(view, x_i, x_j, cell)
    _check_size(view, g, w, config.min_stratum_size, name)
    f_i = _curve(view, g, w, "i", (name,))
    if t <= w_j:
        return float(f_i(t)), {"n_stratum": len(g.idx), "n_window": 0}
    if w_j + _bandwidth(config, g.jfirst_times) >= view.tau:
        raise InputError(f"w_j + bandwidth must be below tau={view.tau}")
    h = _bandwidth(config, g.jfirst_times)
    k, counts, widened = _window_means(view, g, w, t, np.array([w_j]), h, config)
    fw = float(f_i(w_j, left=True))
    value = fw + (1.0 - fw) * float(k[0])
    return value, {"n_stratum": len(g.idx), "n_window": int(counts[0]), "widened": widened, "bandwidth": h}


def _natural(view, w, config, t, x, x_j_prime, cell):
    x_i, x_j = x
    g = view.group(x_i, x_j, cell)
    gp = view.group(x_i, x_j_prime, cell)
    name = _stratum_name(view, x_i, x_j, cell)
    _check_size(view, g, w, config.min_stratum_size, name)
    _check_size(view, gp, w, config.min_stratum_size, _stratum_name(view, x_i, x_j_prime, cell))
    f_i = _curve(view, g, w, "i", (name,))
    f_j = _curve(view, gp, w, "j", (name,))
    u, dF = f_j.jumps(upto=t)
    u, dF = u[u < t], dF[u < t]
    diag = {"n_stratum": len(g.idx), "n_jumps": len(u), "widened": 0}
    total = 0.0
    if len(u):
        h = _bandwidth(config, g.jfirst_times)
        k, counts, widened = _window_means(view, g, w, t, u, h, config)
        fu = f_i(u, left=True)
        total = float(np.dot(dF, fu + (1.0 - fu) * k))
        diag.update(widened=widened, bandwidth=h, min_window=int(counts.min()), median_window=float(np.median(counts)))
    value = total + float(f_i(t)) * (1.0 - float(f_j(t)))
    return min(max(value, 0.0), 1.0), diag


def _raw_mean(view, w, t, x, cell):
    g = view.group(x[0], x[1], cell)
    rec = g.idx
    wt = w[rec]
    y = (view.ii[rec] & (view.ti[rec] < t)).astype(float)
    n = wt.sum()
    p = float(np.dot(wt, y) / n)
    return p, math.sqrt(max(p * (1 - p), 0.0) / n)


def estimate_controlled_outcome(data, config, t, w_j, x, covariate_bin=None, subject=None, weights=None):
    """Plug-in estimate of ``E[Y_i(t; w_j, x)]`` within one stratum.

    Returns an :class:`EstimandValue` of kind ``Y_controlled``; its
    diagnostics hold the stratum size and the number of records in the
    ``w_j`` window.
    """
    config = config or EstimatorConfig()
    subject = config.subject if subject is None else subject
    view = _view(data, subject, config.covariate_bins if covariate_bin is not None else 0)
    cell = _cell_index(view, covariate_bin)
    if t > view.tau:
        raise InputError(f"t={t} exceeds the horizon tau={view.tau}")
    w = view.pair_weights(weights)
    value, diag = _controlled(view, w, config, t, w_j, x, cell)
    req = EstimandRequest("Y_controlled", t, w_j=w_j, x_i=x[0], x_j=x[1])
    return EstimandValue(req, value, math.nan, "empirical", diag)


def estimate_natural_outcome(data, config, t, x, x_j_prime, covariate_bin=None, subject=None, weights=None):
    """Plug-in estimate of ``E[Y_i(t; W_j(x_j'), x)]`` within one stratum.

    When ``x_j' = x_j`` the diagnostics also carry the raw stratum mean of
    ``1{T_i < t}``, its binomial standard error and the z-score of the gap.
    """
    config = config or EstimatorConfig()
    subject = config.subject if subject is None else subject
    view = _view(data, subject, config.covariate_bins if covariate_bin is not None else 0)
    cell = _cell_index(view, covariate_bin)
    if t > view.tau:
        raise InputError(f"t={t} exceeds the horizon tau={view.tau}")
    w = view.pair_weights(weights)
    value, diag = _natural(view, w, config, t, x, x_j_prime, cell)
    if x_j_prime == x[1]:
        raw, se = _raw_mean(view, w, t, x, cell)
        diag.update(raw_mean=raw, raw_se=se, same_world_z=(value - raw) / se if se > 0 else 0.0)
    req = EstimandRequest("Y_natural", t, x_i=x[0], x_j=x[1], x_j_prime=x_j_prime)
    return EstimandValue(req, value, math.nan, "empirical", diag)


def standardize_empirical(data, per_bin_estimates, config=None, subject=None, weights=None):
    """Average per-cell estimates over the empirical covariate distribution.

    Parameters
    ----------
    per_bin_estimates : dict
        Covariate cell -> estimate, or ``None`` for a deficient cell.

    Returns
    -------
    value : float
    diagnostics : dict
        Cells used and dropped, and the covariate mass of the dropped cells.
    """
    config = config or EstimatorConfig()
    subject = config.subject if subject is None else subject
    if not config.covariate_bins:
        if len(per_bin_estimates) != 1:
            raise InputError("without covariate bins there is exactly one cell")
        (value,) = per_bin_estimates.values()
        if value is None:
            raise InsufficientDataError("the only stratum is deficient", stratum="all")
        return float(value), {"cells_used": 1, "cells_dropped": 0, "dropped_mass": 0.0}
    view = _view(data, subject, config.covariate_bins)
    w = view.pair_weights(weights)
    mass = np.bincount(view.cell, weights=w, minlength=view.n_cells)
    mass = mass / mass.sum()
    used = {c: v for c, v in per_bin_estimates.items() if v is not None}
    if not used:
        raise InsufficientDataError("every covariate cell is deficient", stratum="all cells")
    cells = np.array(list(used))
    vals = np.array([used[c] for c in cells], dtype=float)
    m = mass[cells]
    dropped = [view.cell_label(c) for c, v in per_bin_estimates.items() if v is None]
    diag = {
        "cells_used": len(cells),
        "cells_dropped": len(dropped),
        "dropped_mass": float(1.0 - m.sum()),
        "dropped": dropped,
    }
    return float(np.dot(m, vals) / m.sum()), diag


# ---------------------------------------------------------------------------
# crude frequencies


def _crude(view, w_pairs, t, kind, a):
    n = view.n_pairs
    y = (view.ii & (view.ti < t)).astype(float)

    def by_pair(v):
        return np.bincount(view.pair, weights=v, minlength=n)

    wt = view.pair_weights(w_pairs)

    def attack(x_i, x_j=None):
        sel = view.xi == x_i
        if x_j is not None:
            sel &= view.xj == x_j
        sel = sel * wt
        if sel.sum() <= 0:
            raise UndefinedEstimandError(f"AR: no records with x_i={x_i}, x_j={x_j}")
        return Influence.ratio_of_means(by_pair(sel * y), by_pair(sel), "attack rate")

    def sar(x_i, x_j):
        sel = (view.xi == x_i) & (view.xj == x_j) & view.fj & (view.tj < t)
        sel = sel * wt
        if sel.sum() <= 0:
            raise UndefinedEstimandError(f"SAR: no records with partner infected first before t, x=({x_i},{x_j})")
        return Influence.ratio_of_means(by_pair(sel * y), by_pair(sel), "secondary attack rate")

    if kind == "AR":
        return attack(a["x_i"], a.get("x_j"))
    if kind == "DE":
        return attack(1) - attack(0)
    if kind == "VE_AR":
        return attack(1).one_minus_ratio(attack(0), "VE_AR")
    if kind == "IDE":
        return attack(0, 1) - attack(0, 0)
    if kind == "SAR":
        return sar(a["x_i"], a["x_j"])
    if kind == "VE_I_net":
        return sar(0, 1).one_minus_ratio(sar(0, 0), "VE_I_net")
    raise InputError(f"{kind} is not a crude estimand")


CRUDE_KINDS = ("AR", "VE_AR", "DE", "IDE", "SAR", "VE_I_net")


def estimate_crude(data, t, kind, subject=None, weights=None, **args):
    """Empirical crude estimand with a partnership-clustered delta-method SE."""
    req = EstimandRequest(kind, t, **args)
    if kind not in CRUDE_KINDS:
        raise InputError(f"{kind} is not a crude estimand; expected one of {CRUDE_KINDS}")
    view = _view(data, subject, 0)
    res = _crude(view, weights, t, kind, req.args())
    return EstimandValue(req, res.value, res.se, "empirical", {"n_records": len(view.m)})


# ---------------------------------------------------------------------------
# effects, standardization and bootstrap


def _terms(req):
    """(sign, builder) pairs whose signed sum is the estimand."""
    r = req
    ctrl = lambda w_j, x: ("ctrl", w_j, x)  # noqa: E731
    nat = lambda x, xp: ("nat", x, xp)  # noqa: E731
    k = r.kind
    if k == "Y_controlled":
        return [(1, ctrl(r.w_j, (r.x_i, r.x_j)))]
    if k == "Y_natural":
        xp = r.x_j if r.x_j_prime is None else r.x_j_prime
        return [(1, nat((r.x_i, r.x_j), xp))]
    if k == "CE_controlled":
        return [(1, ctrl(r.w_j, (r.x_i, r.x_j))), (-1, ctrl(r.w_j_prime, (r.x_i, r.x_j)))]
    if k == "CE_natural":
        return [(1, nat((r.x_i, r.x_j), 0)), (-1, nat((r.x_i, r.x_j), 1))]
    if k == "SE_controlled":
        return [(1, ctrl(r.w_j, (1, r.x_j))), (-1, ctrl(r.w_j, (0, r.x_j)))]
    if k == "SE_natural":
        return [(1, nat((1, r.x_j), r.x_j)), (-1, nat((0, r.x_j), r.x_j))]
    if k == "IE_controlled":
        return [(1, ctrl(r.w_j, (r.x_i, 1))), (-1, ctrl(r.w_j, (r.x_i, 0)))]
    if k == "IE_natural":
        xp = 0 if r.x_j_prime is None else r.x_j_prime
        return [(1, nat((r.x_i, 1), xp)), (-1, nat((r.x_i, 0), xp))]
    if k == "VE_I_asym":
        return [(1, nat((0, 1), 1)), (-1, nat((0, 0), 1))]
    if k == "VE_C_asym":
        return [(1, nat((0, 0), 1)), (-1, nat((0, 0), 0))]
    raise InputError(f"{k} has no plug-in estimator")


def _effect(view, w_pairs, config, req):
    """Point estimate of a controlled or natural estimand, standardized over cells."""
    w = view.pair_weights(w_pairs)
    terms = _terms(req)
    cells = [None] if not view.bins else list(range(view.n_cells))
    per_cell = {}
    diag = {"widened": 0}
    for cell in cells:
        try:
            v = 0.0
            for sign, term in terms:
                if term[0] == "ctrl":
                    val, d = _controlled(view, w, config, req.t, term[1], term[2], cell)
                else:
                    val, d = _natural(view, w, config, req.t, term[1], term[2], cell)
                diag["widened"] += d.get("widened", 0)
                v += sign * val
            per_cell[cell if cell is not None else 0] = v
        except InsufficientDataError as exc:
            if not view.bins:
                raise
            per_cell[cell] = None
            diag.setdefault("deficient", []).append(str(exc.stratum))
    if not view.bins:
        return per_cell[0], diag
    mass = np.bincount(view.cell, weights=w, minlength=view.n_cells)
    used = [c for c, v in per_cell.items() if v is not None]
    if not used:
        raise InsufficientDataError("every covariate cell is deficient", stratum="all cells")
    m = mass[used]
    value = float(np.dot(m, [per_cell[c] for c in used]) / m.sum())
    diag.update(cells_used=len(used), dropped_mass=float(1 - m.sum() / mass.sum()))
    return value, diag


def bootstrap_weights(n, b, seed):
    """Multinomial partnership counts for bootstrap replicate ``b`` of ``seed``."""
    ss = np.random.SeedSequence([int(seed), int(b)])
    rng = np.random.default_rng(ss)
    return rng.multinomial(n, np.full(n, 1.0 / n)).astype(float)


def estimate(data, request, config=None):
    """Estimate any supported estimand from trial data.

    Crude kinds use partnership-clustered delta-method standard errors.
    Controlled and natural kinds use ``config.bootstrap`` resamples of
    partnerships (NaN when zero).
    """
    config = config or EstimatorConfig()
    if request.t > data.tau:
        raise InputError(f"t={request.t} exceeds the horizon tau={data.tau}")
    if not np.any((data.c1 == 0) | (data.c2 == 0)):
        raise InsufficientDataError("no infection is observed in the dataset", stratum="all records censored")
    if request.kind in CRUDE_KINDS:
        view = _view(data, config.subject, 0)
        res = _crude(view, None, request.t, request.kind, request.args())
        return EstimandValue(request, res.value, res.se, "empirical", {"n_records": len(view.m)})
    view = _view(data, config.subject, config.covariate_bins)
    value, diag = _effect(view, None, config, request)
    se = math.nan
    if config.bootstrap:
        se = bootstrap_se(data, request, config, view)
        diag["bootstrap"] = config.bootstrap
    return EstimandValue(request, value, se, "empirical", diag)


def bootstrap_se(data, request, config, view=None):
    """Standard deviation of the estimate over partnership bootstrap replicates."""
    view = view or _view(data, config.subject, config.covariate_bins)
    n = len(data)

    def one(b):
        w = bootstrap_weights(n, b, config.seed)
        try:
            return _effect(view, w, config, request)[0]
        except (InsufficientDataError, UndefinedEstimandError):
            return math.nan

    reps = range(config.bootstrap)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            vals = np.array(list(pool.map(one, reps)))
    else:
        vals = np.array([one(b) for b in reps])
    vals = vals[np.isfinite(vals)]
    if len(vals) < 2:
        return math.nan
    return float(np.std(vals, ddof=1))


__all__ = [
    "CRUDE_KINDS",
    "EstimatorConfig",
    "SurvivalCurve",
    "bootstrap_se",
    "bootstrap_weights",
    "estimate",
    "estimate_controlled_outcome",
    "estimate_crude",
    "estimate_initial_cdf",
    "estimate_natural_outcome",
    "initial_cdf_invariance",
    "standardize_empirical",
]
