"""Command-line entry point.

Verbs: simulate, truth, estimate, compare, reproduce-tables,
reproduce-figures. Exit codes are 0 on success, 1 on runtime failures
(including failed comparisons) and 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import bundled_config_names, resolve_config
from .errors import ConfigError, VaxpairError
from .io import read_dataset, read_requests, read_table, table_text, write_dataset
from .reporting import (
    compare_tables,
    estimate_rows,
    reproduce_figures,
    reproduce_tables,
    table_requests,
    truth_rows,
)
from .simulate import THREADS_ENV, default_threads, simulate_trial

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("vaxpair")


def _load(args):
    cfg = resolve_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=args.seed, truth_seed=args.seed, bootstrap_seed=args.seed)
    return cfg


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    Path(path).write_text(text, newline="\n")


def _check_n(args):
    if args.n is not None and args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")


def cmd_simulate(args):
    _check_n(args)
    cfg = _load(args)
    if args.n is not None:
        cfg = cfg.with_(n=args.n)
    scenario = cfg.scenario()
    data = simulate_trial(scenario, threads=args.threads)
    digest = write_dataset(data, args.out)
    log.info("wrote %d partnerships to %s (sha256 %s)", len(data), args.out, digest)
    return EXIT_OK


def _requests(args, cfg):
    if args.requests:
        return read_requests(args.requests)
    reqs = []
    for t in cfg.t_grid:
        reqs += table_requests(t)
    return reqs


def cmd_truth(args):
    cfg = _load(args)
    rows = truth_rows(cfg, _requests(args, cfg))
    _write(args.out, table_text(rows))
    flagged = [r for r in rows if r["status"] != "ok"]
    for r in flagged:
        log.warning("%s t=%g: %s", r["request"].kind, r["request"].t, r["note"])
    return EXIT_OK


def cmd_estimate(args):
    cfg = _load(args)
    data = read_dataset(args.dataset)
    est = cfg.estimator_config(threads=args.threads)
    if args.bootstrap is not None:
        est = est.with_(bootstrap=args.bootstrap)
    design = data.metadata.get("design", cfg.design)
    rows = estimate_rows(data, _requests(args, cfg), est, design)
    _write(args.out, table_text(rows))
    for r in rows:
        if r["status"] != "ok":
            log.warning("%s t=%g: %s", r["request"].kind, r["request"].t, r["note"])
    return EXIT_OK


def cmd_compare(args):
    truth = read_table(args.truth)
    empirical = read_table(args.empirical)
    result = compare_tables(truth, empirical, z_max=args.z_max)
    _write(args.out, result.text())
    if not result.ok:
        log.error("%d of %d rows outside %g standard errors", result.n_fail, len(result.rows), args.z_max)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_reproduce_tables(args):
    _check_n(args)
    tables = tuple(args.tables.split(",")) if args.tables else ("table1", "table2")
    reproduce_tables(args.out, tables, n=args.n, threads=args.threads, bootstrap=args.bootstrap)
    log.info("tables written to %s", args.out)
    return EXIT_OK


def cmd_reproduce_figures(args):
    reproduce_figures(args.out)
    log.info("figure curves written to %s", args.out)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    common.add_argument("--verbose", "-v", action="count", default=0, help="more logging (repeatable)")

    parser = argparse.ArgumentParser(
        prog="vaxpair",
        description="Simulate partnership vaccine trials with contagion, compute exact causal estimands, "
        "and estimate them from data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    cfg_help = f"scenario config file or bundled name ({', '.join(bundled_config_names())})"

    p = sub.add_parser("simulate", parents=[common], help="simulate a trial dataset")
    p.add_argument("--config", required=True, help=cfg_help)
    p.add_argument("--out", required=True, help="dataset CSV (a .json sidecar is written next to it)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--n", type=int, help="override the number of partnerships")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("truth", parents=[common], help="compute exact estimands from the hazard model")
    p.add_argument("--config", required=True, help=cfg_help)
    p.add_argument("--requests", help="request CSV (default: the table estimands at each t_grid time)")
    p.add_argument("--out", default="-", help="output CSV (default stdout)")
    p.add_argument("--seed", type=int, help="override the covariate Monte Carlo seed")
    p.set_defaults(func=cmd_truth)

    p = sub.add_parser("estimate", parents=[common], help="estimate estimands from a dataset")
    p.add_argument("--dataset", required=True, help="dataset CSV")
    p.add_argument("--config", required=True, help=cfg_help + "; its [estimator] section is used")
    p.add_argument("--requests", help="request CSV (default: the table estimands)")
    p.add_argument("--out", default="-", help="output CSV (default stdout)")
    p.add_argument("--seed", type=int, help="override the bootstrap seed")
    p.add_argument("--bootstrap", type=int, help="override the number of bootstrap replicates")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", parents=[common], help="compare a truth table with an empirical table")
    p.add_argument("--truth", required=True)
    p.add_argument("--empirical", required=True)
    p.add_argument("--out", default="-", help="report CSV (default stdout)")
    p.add_argument("--z-max", type=float, default=3.0, help="pass threshold on |z| (default 3)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("reproduce-tables", parents=[common], help="regenerate the simulation tables")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tables", help="comma list of table1,table2 (default both)")
    p.add_argument("--n", type=int, help="override partnerships per design")
    p.add_argument("--bootstrap", type=int, help="override bootstrap replicates")
    p.set_defaults(func=cmd_reproduce_tables)

    p = sub.add_parser("reproduce-figures", parents=[common], help="regenerate the figure curve data")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_reproduce_figures)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is None:
            args.threads = default_threads()
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except VaxpairError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
