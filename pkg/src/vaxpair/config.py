"""Scenario configuration files.

A configuration is an INI file with sections ``[scenario]``, ``[hazard]``,
``[design]``, ``[covariates]`` and the optional ``[truth]`` and
``[estimator]``. Treatment and covariate coefficients are written on the
multiplicative scale (``exp_beta0 = 0.4``); ``exp_beta0 = 0`` means treatment
removes the external hazard. Values are kept exactly as parsed, so
parse -> serialize -> parse is the identity.

Example::

    [scenario]
    name = table1_constant
    n = 100000
    tau = 4
    seed = 101

    [hazard]
    alpha = constant(0.2)
    gamma = constant(10)
    exp_beta0 = 0.4
    exp_beta1 = 0.4
    exp_sigma = 0.01
    exp_theta0 = 0.95

    [design]
    kind = bernoulli

    [covariates]
    law = bivariate_normal
    v = 1
    rho = 0.1
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .design import DESIGN_KINDS, AssignmentDesign, BivariateNormalLaw, PointLaw
from .errors import ConfigError, VaxpairError
from .estimators import WINDOW_POLICIES, EstimatorConfig
from .hazards import BaselineHazard, HazardSpec
from .simulate import Scenario

SECTIONS = ("scenario", "hazard", "design", "covariates", "truth", "estimator")
REQUIRED_SECTIONS = ("scenario", "hazard")


@dataclass(frozen=True)
class RunConfig:
    """Everything one configuration file specifies, on the file's own scale."""

    name: str
    n: int = 100_000
    tau: float = 4.0
    seed: int = 0
    alpha: str = "constant(0.2)"
    gamma: str = "constant(0)"
    exp_beta0: float = 1.0
    exp_beta1: float = 1.0
    exp_sigma: float = 1.0
    exp_theta0: tuple = (1.0,)
    exp_theta1: tuple = (1.0,)
    exp_theta2: tuple = (1.0,)
    per_subject_alpha_scale: tuple = (1.0, 1.0)
    external_covariates_in_internal: bool = True
    design: str = "bernoulli"
    law: str = "point"
    v: float = 1.0
    rho: float = 0.0
    dim: int = 1
    l1: tuple = (0.0,)
    l2: tuple = (0.0,)
    truth_n_draws: int = 200_000
    truth_seed: int = 1
    wj_bandwidth: Optional[float] = None
    covariate_bins: int = 0
    t_grid: tuple = (2.0,)
    min_stratum_size: int = 20
    window_policy: str = "widen"
    bootstrap: int = 200
    bootstrap_seed: int = 0

    # builders

    def hazard_spec(self):
        def log_(v):
            return math.log(v) if v > 0 else -math.inf

        return HazardSpec(
            alpha=BaselineHazard.from_text(self.alpha),
            gamma=BaselineHazard.from_text(self.gamma),
            beta0=log_(self.exp_beta0),
            beta1=math.log(self.exp_beta1),
            sigma=math.log(self.exp_sigma),
            theta0=tuple(math.log(v) for v in self.exp_theta0),
            theta1=tuple(math.log(v) for v in self.exp_theta1),
            theta2=tuple(math.log(v) for v in self.exp_theta2),
            per_subject_alpha_scale=self.per_subject_alpha_scale,
            external_covariates_in_internal=self.external_covariates_in_internal,
        )

    def covariate_law(self):
        if self.law == "bivariate_normal":
            return BivariateNormalLaw(self.v, self.rho, self.dim)
        return PointLaw(self.l1, self.l2)

    def assignment(self):
        return AssignmentDesign(self.design)

    def scenario(self):
        return Scenario(self.name, self.hazard_spec(), self.assignment(), self.covariate_law(), self.n, self.tau, self.seed)

    def estimator_config(self, **overrides):
        cfg = EstimatorConfig(
            wj_bandwidth=self.wj_bandwidth,
            covariate_bins=self.covariate_bins,
            t_grid=self.t_grid,
            min_stratum_size=self.min_stratum_size,
            window_policy=self.window_policy,
            bootstrap=self.bootstrap,
            seed=self.bootstrap_seed,
        )
        return cfg.with_(**overrides) if overrides else cfg

    def with_(self, **changes):
        return replace(self, **changes)


# (section, key, field name, kind)
_KEYS = [
    ("scenario", "name", "name", "str"),
    ("scenario", "n", "n", "int"),
    ("scenario", "tau", "tau", "float"),
    ("scenario", "seed", "seed", "int"),
    ("hazard", "alpha", "alpha", "baseline"),
    ("hazard", "gamma", "gamma", "baseline"),
    ("hazard", "exp_beta0", "exp_beta0", "float"),
    ("hazard", "exp_beta1", "exp_beta1", "float"),
    ("hazard", "exp_sigma", "exp_sigma", "float"),
    ("hazard", "exp_theta0", "exp_theta0", "floats"),
    ("hazard", "exp_theta1", "exp_theta1", "floats"),
    ("hazard", "exp_theta2", "exp_theta2", "floats"),
    ("hazard", "per_subject_alpha_scale", "per_subject_alpha_scale", "floats"),
    ("hazard", "external_covariates_in_internal", "external_covariates_in_internal", "bool"),
    ("design", "kind", "design", "str"),
    ("covariates", "law", "law", "str"),
    ("covariates", "v", "v", "float"),
    ("covariates", "rho", "rho", "float"),
    ("covariates", "dim", "dim", "int"),
    ("covariates", "l1", "l1", "floats"),
    ("covariates", "l2", "l2", "floats"),
    ("truth", "n_draws", "truth_n_draws", "int"),
    ("truth", "seed", "truth_seed", "int"),
    ("estimator", "wj_bandwidth", "wj_bandwidth", "optfloat"),
    ("estimator", "covariate_bins", "covariate_bins", "int"),
    ("estimator", "t_grid", "t_grid", "floats"),
    ("estimator", "min_stratum_size", "min_stratum_size", "int"),
    ("estimator", "window_policy", "window_policy", "str"),
    ("estimator", "bootstrap", "bootstrap", "int"),
    ("estimator", "seed", "bootstrap_seed", "int"),
]
_BY_KEY = {(s, k): (f, kind) for s, k, f, kind in _KEYS}


def _key_lines(text):
    """Map (section, key) to the 1-based line where it is defined."""
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            lines[(section, None)] = no
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines[(section, m.group(1).strip().lower())] = no
    return lines


def _convert(text, kind):
    text = text.strip()
    if kind == "str":
        if not text:
            raise ValueError("empty value")
        return text
    if kind == "int":
        return int(text.replace("_", ""))
    if kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("value must be finite")
        return v
    if kind == "optfloat":
        return None if text.lower() in ("", "none", "auto") else _convert(text, "float")
    if kind == "floats":
        parts = [p for p in re.split(r"[,\s]+", text) if p]
        if not parts:
            raise ValueError("empty list")
        return tuple(_convert(p, "float") for p in parts)
    if kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "baseline":
        BaselineHazard.from_text(text)
        return _normalize_baseline(text)
    raise AssertionError(kind)


def _normalize_baseline(text):
    return re.sub(r"\s+", "", text)


def parse_config(text, path="<config>"):
    """Parse configuration text into a :class:`RunConfig`.

    Raises
    ------
    ConfigError
        With the file and line of the offending entry.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=str(path))
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError(f"cannot parse: {exc.message.splitlines()[0]}", path, line) from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse: {exc.message}", path, getattr(exc, "lineno", None)) from exc
    lines = _key_lines(text)
    for section in parser.sections():
        if section.lower() not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", path, lines.get((section.lower(), None)))
    for section in REQUIRED_SECTIONS:
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]", path)
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            where = lines.get((section, key))
            if (section, key) not in _BY_KEY:
                raise ConfigError(f"unknown key {key!r} in [{section}]", path, where)
            name, kind = _BY_KEY[(section, key)]
            try:
                values[name] = _convert(raw, kind)
            except (ValueError, VaxpairError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}", path, where) from exc
    if "name" not in values:
        raise ConfigError("[scenario] name is required", path, lines.get(("scenario", None)))
    cfg = RunConfig(**values)
    _validate(cfg, lines, path)
    return cfg


def _validate(cfg, lines, path):
    def fail(section, key, message):
        raise ConfigError(f"[{section}] {key}: {message}", path, lines.get((section, key), lines.get((section, None))))

    if cfg.n < 1:
        fail("scenario", "n", f"must be >= 1, got {cfg.n}")
    if not cfg.tau > 0:
        fail("scenario", "tau", f"must be > 0, got {cfg.tau}")
    if not 0 <= cfg.seed < 2**64:
        fail("scenario", "seed", "must be in [0, 2**64)")
    if cfg.exp_beta0 < 0:
        fail("hazard", "exp_beta0", "must be >= 0")
    for key in ("exp_beta1", "exp_sigma"):
        if not getattr(cfg, key) > 0:
            fail("hazard", key, "must be > 0")
    for key in ("exp_theta0", "exp_theta1", "exp_theta2"):
        if any(v <= 0 for v in getattr(cfg, key)):
            fail("hazard", key, "entries must be > 0")
    if len({len(cfg.exp_theta0), len(cfg.exp_theta1), len(cfg.exp_theta2)}) != 1:
        fail("hazard", "exp_theta1", "exp_theta0, exp_theta1 and exp_theta2 must have the same length")
    scale = cfg.per_subject_alpha_scale
    if len(scale) != 2 or any(s < 0 for s in scale):
        fail("hazard", "per_subject_alpha_scale", "needs two values >= 0")
    if cfg.design not in DESIGN_KINDS:
        fail("design", "kind", f"must be one of {', '.join(DESIGN_KINDS)}")
    if cfg.law not in ("bivariate_normal", "point"):
        fail("covariates", "law", "must be bivariate_normal or point")
    if cfg.law == "bivariate_normal":
        if not cfg.v > 0:
            fail("covariates", "v", f"must be > 0, got {cfg.v}")
        if not abs(cfg.rho) < 1:
            fail("covariates", "rho", f"must satisfy |rho| < 1, got {cfg.rho}")
        if cfg.dim < 1:
            fail("covariates", "dim", "must be >= 1")
        law_dim = cfg.dim
    else:
        if len(cfg.l1) != len(cfg.l2):
            fail("covariates", "l2", "l1 and l2 must have the same length")
        law_dim = len(cfg.l1)
    if law_dim != len(cfg.exp_theta0):
        fail("covariates", "dim" if cfg.law == "bivariate_normal" else "l1",
             f"covariate dimension {law_dim} does not match {len(cfg.exp_theta0)} coefficients")
    if cfg.truth_n_draws < 1:
        fail("truth", "n_draws", "must be >= 1")
    if cfg.wj_bandwidth is not None and not cfg.wj_bandwidth > 0:
        fail("estimator", "wj_bandwidth", "must be > 0")
    if cfg.covariate_bins < 0:
        fail("estimator", "covariate_bins", "must be >= 0")
    if any(t < 0 for t in cfg.t_grid):
        fail("estimator", "t_grid", "times must be >= 0")
    if cfg.min_stratum_size < 1:
        fail("estimator", "min_stratum_size", "must be >= 1")
    if cfg.window_policy not in WINDOW_POLICIES:
        fail("estimator", "window_policy", f"must be one of {', '.join(WINDOW_POLICIES)}")
    if cfg.bootstrap < 0:
        fail("estimator", "bootstrap", "must be >= 0")
    try:
        cfg.hazard_spec()
    except VaxpairError as exc:
        fail("hazard", "alpha", str(exc))


def load_config(path):
    """Read and parse a configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read: {exc.strerror}", path) from exc
    return parse_config(text, path)


def _format(value, kind):
    if kind in ("float", "optfloat"):
        return "auto" if value is None else repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


def serialize_config(cfg):
    """Render a :class:`RunConfig` as configuration text."""
    out = []
    current = None
    for section, key, name, kind in _KEYS:
        if section != current:
            if current is not None:
                out.append("")
            out.append(f"[{section}]")
            current = section
        out.append(f"{key} = {_format(getattr(cfg, name), kind)}")
    return "\n".join(out) + "\n"


def bundled_config_names():
    root = resources.files("vaxpair") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def bundled_config(name):
    """Load one of the configurations shipped with the package, by name."""
    root = resources.files("vaxpair") / "configs"
    entry = root / f"{name}.cfg"
    if not entry.is_file():
        raise ConfigError(f"no bundled config {name!r}; available: {', '.join(bundled_config_names())}")
    return parse_config(entry.read_text(), f"configs/{name}.cfg")


def resolve_config(ref):
    """A path to a config file, or the name of a bundled config."""
    p = Path(ref)
    if p.exists() or p.suffix == ".cfg" and p.parent != Path("."):
        return load_config(p)
    name = p.name[:-4] if p.name.endswith(".cfg") else p.name
    return bundled_config(name)


__all__ = [
    "RunConfig",
    "bundled_config",
    "bundled_config_names",
    "load_config",
    "parse_config",
    "resolve_config",
    "serialize_config",
]
