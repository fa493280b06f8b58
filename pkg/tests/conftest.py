import math

import pytest

from vaxpair.config import bundled_config
from vaxpair.hazards import BaselineHazard, HazardSpec
from vaxpair.simulate import simulate_trial

ALPHA = BaselineHazard.constant(0.2)
GAMMA = BaselineHazard.constant(10.0)


def spec_table1(**changes):
    """The table1 constant-hazard model without covariate effects."""
    base = HazardSpec(
        alpha=ALPHA,
        gamma=GAMMA,
        beta0=math.log(0.4),
        beta1=math.log(0.4),
        sigma=math.log(0.01),
    )
    return base.with_(**changes)


def spec_table2(**changes):
    base = HazardSpec(
        alpha=ALPHA,
        gamma=GAMMA,
        beta0=math.log(0.2),
        beta1=math.log(0.2),
        sigma=math.log(0.5),
    )
    return base.with_(**changes)


_DATA = {}


def simulated(name, design=None, n=None, seed=None):
    """Simulate a bundled scenario once per session."""
    key = (name, design, n, seed)
    if key not in _DATA:
        cfg = bundled_config(name)
        changes = {k: v for k, v in (("design", design), ("n", n), ("seed", seed)) if v is not None}
        if changes:
            cfg = cfg.with_(**changes)
        _DATA[key] = simulate_trial(cfg.scenario(), threads=4)
    return _DATA[key]


@pytest.fixture(scope="session")
def table1_data():
    return simulated("table1_constant")


@pytest.fixture(scope="session")
def table2_data():
    return simulated("table2_constant")


# -- acceptance report -----------------------------------------------------------

ACCEPTANCE = {}


def record_criterion(number, title, checks):
    """Store one criterion's checks and return whether every required check passed.

    ``checks`` holds ``(label, ok, required)`` triples; informational checks
    are printed but do not decide the verdict.
    """
    ok = all(passed for _, passed, required in checks if required)
    lines = [f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}"]
    for label, passed, required in checks:
        if required:
            tag = "ok  " if passed else "FAIL"
        else:
            tag = "info" if passed else "info, not met"
        lines.append(f"    [{tag}] {label}")
    ACCEPTANCE[number] = lines
    print("\n".join(lines))
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number][0])
    terminalreporter.write_sep("-", "acceptance details")
    for number in sorted(ACCEPTANCE):
        for line in ACCEPTANCE[number]:
            terminalreporter.write_line(line)
