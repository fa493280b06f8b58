"""Run orchestration: estimand tables, comparisons, table and figure reproduction.

The functions here are what the command-line verbs call; each returns plain
rows or writes files and records their digests in a :class:`RunManifest`.
"""

from __future__ import annotations

import json
import logging
import math
import platform
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import bundled_config
from .design import DESIGN_KINDS, AssignmentDesign
from .errors import InputError, InsufficientDataError, NumericError, UndefinedEstimandError
from .estimators import estimate
from .io import REQUEST_COLUMNS, format_time, format_value, sha256_text, table_row, write_table
from .simulate import simulate_trial
from .truth import EstimandRequest, TruthEngine

log = logging.getLogger(__name__)

Z_MAX = 3.0

TABLE_SCENARIOS = {
    "table1": ("table1_constant", "table1_constant_nocontagion", "table1_timevarying", "table1_timevarying_nocontagion"),
    "table2": ("table2_constant", "table2_constant_nocontagion", "table2_timevarying", "table2_timevarying_nocontagion"),
}
TABLE_DESIGNS = ("observational", "bernoulli", "block", "cluster")
TABLE_COLUMNS = ("CE", "SE", "IE", "DE", "IDE", "VE_I_net_table_sign")
OBSERVATIONAL_BINS = 4


@dataclass
class RunManifest:
    """What a run did and what it wrote."""

    tool_version: str = __version__
    python: str = field(default_factory=platform.python_version)
    numpy: str = np.__version__
    commands: list = field(default_factory=list)
    scenarios: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def record_output(self, path, digest=None):
        path = Path(path)
        self.outputs[path.name] = digest or sha256_text(path.read_text())

    def write(self, directory):
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", newline="\n")
        return path


# ---------------------------------------------------------------------------
# estimand tables


def table_requests(t=2.0):
    """The natural effects and crude contrasts reported in the reference tables."""
    return [
        EstimandRequest("CE_natural", t, x_i=0, x_j=0),
        EstimandRequest("SE_natural", t, x_j=0),
        EstimandRequest("IE_natural", t, x_i=0),
        EstimandRequest("DE", t),
        EstimandRequest("IDE", t),
        EstimandRequest("VE_I_net", t),
    ]


def truth_rows(cfg, requests, engine=None):
    """Evaluate requests with the truth engine; failures become flagged rows."""
    engine = engine or TruthEngine(
        cfg.hazard_spec(), cfg.assignment(), cfg.covariate_law(), cfg.truth_n_draws, cfg.truth_seed
    )
    rows = []
    for req in requests:
        try:
            v = engine.evaluate(req)
            rows.append(table_row(req, engine.design.kind, v.value, v.mc_se, "truth", "ok", engine.n_draws))
        except UndefinedEstimandError as exc:
            rows.append(table_row(req, engine.design.kind, provenance="truth", status="undefined", note=str(exc)))
        except (InputError, NumericError) as exc:
            rows.append(table_row(req, engine.design.kind, provenance="truth", status="error", note=str(exc)))
    return rows


def estimate_rows(data, requests, est_config, design=""):
    """Evaluate requests with the plug-in estimators; failures become flagged rows."""
    rows = []
    for req in requests:
        try:
            v = estimate(data, req, est_config)
            n_used = v.diagnostics.get("n_stratum", v.diagnostics.get("n_records"))
            note = ""
            if v.diagnostics.get("widened"):
                note = f"{v.diagnostics['widened']} window(s) widened"
            rows.append(table_row(req, design, v.value, v.mc_se, "empirical", "ok", n_used, note))
        except InsufficientDataError as exc:
            rows.append(table_row(req, design, provenance="empirical", status="insufficient", note=f"{exc} [stratum {exc.stratum}]"))
        except UndefinedEstimandError as exc:
            rows.append(table_row(req, design, provenance="empirical", status="undefined", note=str(exc)))
        except InputError as exc:
            rows.append(table_row(req, design, provenance="empirical", status="error", note=str(exc)))
    return rows


# ---------------------------------------------------------------------------
# comparison

COMPARE_COLUMNS = REQUEST_COLUMNS + ("truth", "empirical", "diff", "se", "z", "result")


@dataclass
class Comparison:
    rows: list
    n_fail: int

    @property
    def ok(self):
        return self.n_fail == 0

    def text(self):
        lines = [",".join(COMPARE_COLUMNS)]
        for r in self.rows:
            req = r["request"]
            cells = [req.kind, format_time(req.t)]
            for name in REQUEST_COLUMNS[2:]:
                v = getattr(req, name)
                cells.append("" if v is None else (str(v) if name.startswith("x") else format_time(v)))
            cells += [format_value(r[k]) for k in ("truth", "empirical", "diff", "se", "z")] + [r["result"]]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def compare_tables(truth, empirical, z_max=Z_MAX):
    """Pair truth and empirical rows by request and test ``|z| < z_max``.

    ``z`` divides the difference by the combined standard error. Rows that
    are not ``ok`` on either side, or lack a usable standard error, fail.

    Raises
    ------
    InputError
        If the two tables do not hold the same requests.
    """
    t_map = {r["request"].key(): r for r in truth}
    e_map = {r["request"].key(): r for r in empirical}
    if len(t_map) != len(truth) or len(e_map) != len(empirical):
        raise InputError("duplicate requests in a table")
    orphans = sorted(set(t_map) ^ set(e_map), key=str)
    if orphans:
        listing = "; ".join(
            f"{'truth' if k in t_map else 'empirical'} only: {k[0]} t={k[1]}" for k in orphans
        )
        raise InputError(f"tables do not match: {listing}")
    rows = []
    fails = 0
    for key, t_row in t_map.items():
        e_row = e_map[key]
        row = {"request": t_row["request"], "truth": t_row["value"], "empirical": e_row["value"]}
        row.update(diff=None, se=None, z=None, result="fail")
        if t_row["status"] == "ok" and e_row["status"] == "ok":
            diff = e_row["value"] - t_row["value"]
            se = math.hypot(t_row["mc_se"] or 0.0, e_row["mc_se"] if e_row["mc_se"] is not None else math.nan)
            row.update(diff=diff, se=se)
            if math.isfinite(se) and se > 0:
                row["z"] = diff / se
                row["result"] = "pass" if abs(row["z"]) < z_max else "fail"
        fails += row["result"] == "fail"
        rows.append(row)
    return Comparison(rows, fails)


# ---------------------------------------------------------------------------
# table reproduction


def table_cells(values):
    """Map estimand values (formula sign) to table columns (VE_I_net reported as SAR ratio minus one)."""
    out = {}
    for col, kind in zip(TABLE_COLUMNS, ("CE_natural", "SE_natural", "IE_natural", "DE", "IDE", "VE_I_net")):
        v = values.get(kind)
        if v is not None and col == "VE_I_net_table_sign":
            v = -v
        out[col] = v
    return out


def _design_kinds(design):
    if design in ("observational", "bernoulli"):
        return ("CE_natural", "SE_natural", "IE_natural", "DE", "IDE", "VE_I_net")
    return ("DE",)


def reproduce_scenario(cfg, n=None, threads=1, bootstrap=None, truth=True, designs=TABLE_DESIGNS):
    """Simulate and estimate one table scenario under every design.

    Returns a dict ``design -> {"empirical": {kind: EstimandValue}, "truth": {...}}``.
    Design ``k`` in :data:`DESIGN_KINDS` order uses seed ``cfg.seed + k``.
    """
    t = cfg.t_grid[0]
    reqs = {r.kind: r for r in table_requests(t)}
    out = {}
    engine = None
    if truth:
        engine = TruthEngine(cfg.hazard_spec(), AssignmentDesign("bernoulli"), cfg.covariate_law(), cfg.truth_n_draws, cfg.truth_seed)
    for design in designs:
        run = cfg.with_(design=design, seed=cfg.seed + DESIGN_KINDS.index(design), n=n or cfg.n)
        data = simulate_trial(run.scenario(), threads=threads)
        bins = OBSERVATIONAL_BINS if design == "observational" else 0
        est_cfg = run.estimator_config(covariate_bins=bins, threads=threads)
        if bootstrap is not None:
            est_cfg = est_cfg.with_(bootstrap=bootstrap)
        emp = {}
        tru = {}
        for kind in _design_kinds(design):
            try:
                emp[kind] = estimate(data, reqs[kind], est_cfg)
            except (InsufficientDataError, UndefinedEstimandError) as exc:
                log.warning("%s/%s %s: %s", cfg.name, design, kind, exc)
            if engine is not None:
                tru[kind] = engine.with_design(AssignmentDesign(design)).evaluate(reqs[kind])
        out[design] = {"empirical": emp, "truth": tru, "seed": run.seed}
    return out


def reproduce_tables(out_dir, tables=("table1", "table2"), n=None, threads=1, bootstrap=None, manifest=None):
    """Write ``<table>.csv`` (reference table layout, empirical and truth rows) and per-scenario long tables."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = manifest or RunManifest()
    results = {}
    for table in tables:
        if table not in TABLE_SCENARIOS:
            raise InputError(f"unknown table {table!r}; expected one of {sorted(TABLE_SCENARIOS)}")
        lines = [",".join(("table", "scenario", "design", "source") + TABLE_COLUMNS)]
        for name in TABLE_SCENARIOS[table]:
            cfg = bundled_config(name)
            log.info("reproducing %s", name)
            res = reproduce_scenario(cfg, n=n, threads=threads, bootstrap=bootstrap)
            results[name] = res
            manifest.scenarios.append(name)
            long_rows = []
            for design in TABLE_DESIGNS:
                manifest.seeds[f"{name}/{design}"] = res[design]["seed"]
                for source in ("empirical", "truth"):
                    vals = {k: v.value for k, v in res[design][source].items()}
                    cells = table_cells(vals)
                    lines.append(
                        ",".join([table, name, design, source] + [format_value(cells[c]) for c in TABLE_COLUMNS])
                    )
                    for v in res[design][source].values():
                        long_rows.append(
                            table_row(v.request, design, v.value, v.mc_se, source, "ok", v.diagnostics.get("n_stratum"))
                        )
            path = out_dir / f"{name}_estimands.csv"
            manifest.record_output(path, write_table(long_rows, path))
        path = out_dir / f"{table}.csv"
        text = "\n".join(lines) + "\n"
        path.write_text(text, newline="\n")
        manifest.record_output(path, sha256_text(text))
    manifest.commands.append(f"reproduce-tables {' '.join(tables)}")
    manifest.write(out_dir)
    return results


# ---------------------------------------------------------------------------
# figure reproduction

FIGURE3_WJ = (0.5, 1.0, 1.5)


def figure3_curves(cfg, t_grid=None):
    """Controlled outcome and effect curves for the contagion illustration.

    Returns rows ``(panel, curve, t, value)``.
    """
    t_grid = np.round(np.arange(0.0, 4.0001, 0.05), 10) if t_grid is None else np.asarray(t_grid)
    eng = TruthEngine(cfg.hazard_spec(), AssignmentDesign("bernoulli"), cfg.covariate_law(), cfg.truth_n_draws, cfg.truth_seed)
    rows = []
    for t in t_grid:
        t = float(t)
        for w in FIGURE3_WJ:
            rows.append(("a", f"Y(t;w_j={w},x=(0,0))", t, eng("Y_controlled", t, w_j=w, x_i=0, x_j=0).value))
        for xj in (0, 1):
            rows.append(("b", f"Y(t;w_j=1,x=(0,{xj}))", t, eng("Y_controlled", t, w_j=1.0, x_i=0, x_j=xj).value))
        for xi in (0, 1):
            rows.append(("c", f"Y(t;w_j=1,x=({xi},0))", t, eng("Y_controlled", t, w_j=1.0, x_i=xi, x_j=0).value))
        rows.append(("d", "CE(t;0.5,1.5,(0,0))", t, eng("CE_controlled", t, w_j=0.5, w_j_prime=1.5, x_i=0, x_j=0).value))
        rows.append(("d", "IE(t;1,x_i=0)", t, eng("IE_controlled", t, w_j=1.0, x_i=0).value))
        rows.append(("d", "SE(t;1,x_j=0)", t, eng("SE_controlled", t, w_j=1.0, x_j=0).value))
    return rows


def figure4_curves(cfg, t_grid=None):
    """Natural effects against crude contrasts over time for one parameterization.

    ``VE_I_net`` is reported as the SAR ratio minus one, matching the tables.
    ``VE_I`` is computed in the same model with subject ``i`` home-bound.
    """
    t_grid = np.round(np.arange(0.1, 4.0001, 0.1), 10) if t_grid is None else np.asarray(t_grid)
    spec = cfg.hazard_spec()
    law = cfg.covariate_law()
    base = TruthEngine(spec, AssignmentDesign("bernoulli"), law, cfg.truth_n_draws, cfg.truth_seed)
    engines = {d: base.with_design(AssignmentDesign(d)) for d in ("bernoulli", "block", "cluster")}
    asym = TruthEngine(spec.with_(per_subject_alpha_scale=(0.0, 1.0)), AssignmentDesign("bernoulli"), law, cfg.truth_n_draws, cfg.truth_seed)
    rows = []
    for t in t_grid:
        t = float(t)
        rows.append(("infectiousness", "IE(t,0)", t, base("IE_natural", t, x_i=0).value))
        rows.append(("infectiousness", "VE_I_net", t, -base("VE_I_net", t).value))
        rows.append(("infectiousness", "VE_I", t, asym("VE_I_asym", t).value))
        rows.append(("susceptibility", "SE(t,0)", t, base("SE_natural", t, x_j=0).value))
        for d, eng in engines.items():
            rows.append(("susceptibility", f"DE[{d}]", t, eng("DE", t).value))
    return rows


def _curve_text(rows):
    lines = ["panel,curve,t,value"]
    lines += [f"{p},{c},{format_time(t)},{format_value(v)}" for p, c, t, v in rows]
    return "\n".join(lines) + "\n"


def reproduce_figures(out_dir, manifest=None):
    """Write curve CSVs for the controlled-outcome and natural-effect figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = manifest or RunManifest()
    outputs = {}
    jobs = [
        ("figure3", figure3_curves),
        ("figure4_beta02_sigma05", figure4_curves),
        ("figure4_beta04_sigma001", figure4_curves),
    ]
    for name, fn in jobs:
        cfg = bundled_config(name)
        rows = fn(cfg)
        text = _curve_text(rows)
        path = out_dir / f"{name}.csv"
        path.write_text(text, newline="\n")
        manifest.record_output(path, sha256_text(text))
        manifest.scenarios.append(name)
        manifest.seeds[name] = cfg.truth_seed
        outputs[name] = rows
    manifest.commands.append("reproduce-figures")
    manifest.write(out_dir)
    return outputs


__all__ = [
    "Comparison",
    "RunManifest",
    "TABLE_SCENARIOS",
    "compare_tables",
    "estimate_rows",
    "figure3_curves",
    "figure4_curves",
    "reproduce_figures",
    "reproduce_scenario",
    "reproduce_tables",
    "table_cells",
    "table_requests",
    "truth_rows",
]
