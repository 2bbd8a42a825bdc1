import numpy as np
import pytest

from fdtdsens import ports
from fdtdsens.scenario import load_scenario, parse_scenario

# Short 1-D line with two slabs; decays fully within nsteps.
TOY = """\
[scenario]
name = toy

[grid]
nx = 1
ny = 1
nz = 260
dx = 0.000424
dy = 0.000424
dz = 0.000424

[simulation]
dt = 4.41e-13
nsteps = 9000

[excitation]
t0 = 1.2e-10
ts = 2e-11

[port]
k = 10

[analysis]
f_lo = 1e9
f_hi = 25e9
nfreq = 201

[region a]
i = 1
j = 1
k = 100:106
eps_r = 2.2

[region b]
i = 1
j = 1
k = 150:161
eps_r = 3.0

[parameter da]
i = 1
j = 1
k = 106
axis = z

[parameter db]
i = 1
j = 1
k = 161
axis = z

[parameter ea]
i = 1
j = 1
k = 100:106
axis = material

[parameter eb]
i = 1
j = 1
k = 150:161
axis = material

[parameter gap]
i = 1
j = 1
k = 130
axis = z
"""

# 3-D stripline: a strip over ground runs into the absorbing faces; a full PEC
# sheet at the top of k = 5 seals off the cells above it.
SEALED = """\
[scenario]
name = sealed

[grid]
nx = 12
ny = 16
nz = 8
dx = 0.001
dy = 0.001
dz = 0.001
boundary = mur
zlo = pec

[simulation]
dt = 1.5e-12
nsteps = 3000

[excitation]
t0 = 6e-11
ts = 2e-11

[port]
component = z
i = 6
j = 3
k = 1:2

[analysis]
f_lo = 1e9
f_hi = 20e9
nfreq = 101

[region block]
i = 7:8
j = 8:10
k = 1:2
eps_r = 2.0

[sheet strip]
i = 5:7
j = 1:16
k = 2
role = feed

[sheet lid]
i = 1:12
j = 1:16
k = 5

[parameter near]
i = 8
j = 8:9
k = 1
axis = x

[parameter hidden]
i = 5:6
j = 5:6
k = 7
axis = y
"""


@pytest.fixture(scope="session")
def toy():
    return parse_scenario(TOY)


@pytest.fixture(scope="session")
def sealed():
    return parse_scenario(SEALED)


@pytest.fixture(scope="session")
def multilayer():
    return load_scenario("multilayer")


def rel_l2(a, b, valid=None) -> float:
    """Relative L2 error of ``a`` against reference ``b`` over finite entries (and ``valid``)."""
    a, b = np.asarray(a), np.asarray(b)
    mask = np.isfinite(a) & np.isfinite(b)
    if valid is not None:
        mask &= valid
    return float(np.linalg.norm(a[mask] - b[mask]) / np.linalg.norm(b[mask]))


@pytest.fixture(autouse=True, scope="session")
def _fresh_incident_cache():
    ports.clear_cache()
    yield


ACCEPTANCE_LINES: list = []


def report(criterion: str, ok: bool, detail: str) -> bool:
    """Print and keep one PASS/FAIL line for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'} [{criterion}] {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
