import numpy as np
import pytest

from fdtdsens.grid import linear_index
from fdtdsens.scenario import BUILTINS, ScenarioError, load_scenario, parse_scenario, serialize

MINIMAL = """\
[grid]
nx = 1
ny = 1
nz = 50
dx = 1e-3
dy = 1e-3
dz = 1e-3

[simulation]
dt = 1e-12
nsteps = 100

[excitation]
t0 = 6e-11
ts = 1e-11

[port]
k = 5
"""


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_builtin_round_trip(name):
    s = load_scenario(name)
    again = parse_scenario(serialize(s))
    assert again == s
    assert again.grid.same_as(s.grid)


def test_multilayer_layout():
    s = load_scenario("multilayer")
    assert (s.nz, s.dz, s.dt, s.ts, s.t0) == (1030, 0.424e-3, 0.441e-12, 20e-12, 120e-12)
    assert s.port_nodes == [(9,)]
    eps = s.grid.eps_r[0, 0]
    for (lo, hi), e in (((402, 414), 2.2), ((509, 531), 3.0), ((626, 658), 4.0)):
        assert np.all(eps[lo - 1:hi] == e)
    outside = np.ones(1030, bool)
    for lo, hi in ((402, 414), (509, 531), (626, 658)):
        outside[lo - 1:hi] = False
    assert np.all(eps[outside] == 1.0)
    assert [s.parameter(n).subset.indices for n in ("d1", "d2", "d3")] == [(414,), (531,), (658,)]
    assert s.parameter("eps2").subset.indices == tuple(range(509, 532))
    assert not s.reference_grid.eps_r.max() > 1.0


def test_microstrip_layout():
    s = load_scenario("microstrip")
    assert s.grid.shape == (80, 150, 16)
    assert s.t0 == pytest.approx(3 * s.ts)
    p = s.parameter("s1")
    assert len(p.subset) == 6
    assert p.subset.indices == tuple(linear_index(67, j, 4, 80, 150) for j in range(40, 46))
    assert p.subset.indices[0] == 39187
    assert s.grid.eps_r[0, 0, 2] == 2.2 and s.grid.eps_r[0, 0, 3] == 1.0
    # through line survives in the reference structure, stubs do not
    assert s.reference_grid.pec[0][32, 10, 3] and not s.reference_grid.pec[0][50, 42, 3]
    assert s.grid.pec[0][50, 42, 3]


def test_desk_is_coarsened_copy():
    s, full = load_scenario("microstrip-desk"), load_scenario("microstrip")
    assert s.grid.shape == (40, 75, 10)
    assert s.dx == pytest.approx(2 * full.dx) and s.dy == pytest.approx(2 * full.dy)
    assert [p.name for p in s.params] == ["s1", "s2", "s3"]


def test_minimal_defaults():
    s = parse_scenario(MINIMAL)
    assert s.name == "custom" and s.is_1d and s.port.component == "x"
    assert dict(s.boundary)["zlo"] == "mur"
    assert s.gate == s.nsteps


def test_cfl_violation_names_limit():
    text = MINIMAL.replace("dt = 1e-12", "dt = 1e-11")
    with pytest.raises(ScenarioError, match="CFL limit 3.33"):
        parse_scenario(text)
    s = parse_scenario(text.replace("nsteps = 100", "nsteps = 100\ndt_override = true"))
    assert s.dt == 1e-11


def test_all_errors_collected():
    text = MINIMAL.replace("dt = 1e-12", "dt = 1e-11") + """
[region slab]
i = 1
j = 1
k = 40:60
eps_r = 2.0
role = shiny

[parameter p]
i = 1
j = 1
k = 3
axis = q

[grid]
colour = red
"""
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    errs = info.value.errors
    assert any("CFL" in e for e in errs)
    assert any("outside 1:50" in e for e in errs)
    assert any("role" in e for e in errs)
    assert any("axis 'q'" in e for e in errs)
    assert any("duplicate section" in e for e in errs)
    assert any("colour" in e for e in errs)
    assert len(errs) >= 6


def test_missing_keys_reported():
    with pytest.raises(ScenarioError) as info:
        parse_scenario(MINIMAL.replace("nsteps = 100\n", "").replace("k = 5\n", ""))
    assert "[simulation]: missing 'nsteps'" in info.value.errors
    assert "[port]: missing 'k'" in info.value.errors


def test_unknown_builtin():
    with pytest.raises(ScenarioError, match="built-ins"):
        load_scenario("nope")


def test_scenario_file(tmp_path):
    path = tmp_path / "line.scn"
    path.write_text(MINIMAL, encoding="utf-8")
    assert load_scenario(str(path)) == parse_scenario(MINIMAL)
