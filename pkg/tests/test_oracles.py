import numpy as np
import pytest
from conftest import rel_l2
from hypothesis import given, strategies as st

from fdtdsens import ports
from fdtdsens.engine import ProbeSpec, SimulationConfig, SourceSpec, run
from fdtdsens.grid import CellSubset, YeeGrid, perturb
from fdtdsens.oracles import (cfd_first, cfd_mixed, cfd_second, dual_fdtd, dual_mixed, dual_run,
                              lifted_coefficients, scenario_model)
from fdtdsens.params import DesignParameter
from fdtdsens.spectral import dft_settled

finite = st.floats(-100, 100, allow_nan=False)
steps = st.sampled_from([1e-3, 0.01, 0.25, 0.5, 1.0, 4.0])


@given(finite, finite, steps)
def test_cfd_first_exact_for_linear(a, b, h):
    model = lambda off: np.array([a * off.get("x", 0.0) + b])
    assert cfd_first(model, "x", h)[0] == pytest.approx(a, rel=1e-9, abs=1e-9 * (abs(b) + 1) / h)


@given(finite, steps)
def test_cfd_second_exact_for_quadratic(a, h):
    model = lambda off: np.array([a * off.get("x", 0.0) ** 2])
    assert cfd_second(model, "x", h)[0] == pytest.approx(2 * a, rel=1e-9, abs=1e-12)


@given(finite, steps, steps)
def test_cfd_mixed_exact_for_bilinear(a, hu, hv):
    model = lambda off: np.array([a * off.get("u", 0.0) * off.get("v", 0.0) + 3.0 * off.get("u", 0.0)])
    assert cfd_mixed(model, "u", "v", hu, hv)[0] == pytest.approx(a, rel=1e-9, abs=1e-9 / (hu * hv))


def test_cfd_guards():
    model = lambda off: np.zeros(1)
    with pytest.raises(ValueError):
        cfd_first(model, "x", 0.0)
    with pytest.raises(ValueError):
        cfd_mixed(model, "x", "x", 1.0, 1.0)


def _plain_and_dual(scenario, directions, order):
    src, probe = [ports.port_source(scenario)], [ports.port_probe(scenario)]
    plain = run(scenario.grid, scenario.config, src, probe)["port"]
    dual = dual_run(scenario.grid, scenario.config, src, probe, directions, order)["port"]
    return plain, dual


@pytest.mark.parametrize("which", ["toy", "sealed"])
def test_order_zero_is_bit_identical(which, request):
    s = request.getfixturevalue(which).replace(nsteps=400)
    names = [p.name for p in s.params]
    for dirs in ([], [(s.parameter(n), 0.0) for n in names], [(s.parameter(names[0]), 1.0)]):
        plain, dual = _plain_and_dual(s, dirs, 2)
        np.testing.assert_array_equal(dual[0], plain)
        if not any(w for _, w in dirs):
            assert not dual[1:].any()


def test_lifted_order_zero_matches_engine(sealed):
    from fdtdsens.engine import update_coefficients

    base = update_coefficients(sealed.grid, sealed.dt)
    ce, ch = lifted_coefficients(sealed.grid, sealed.dt, [(sealed.parameter("near"), 1.0)], 3)
    keys = [(0, 1), (0, 2), (1, 2), (1, 0), (2, 0), (2, 1)]
    for i, k in enumerate(keys):
        np.testing.assert_array_equal(ce[0][i], base.e[k])
        np.testing.assert_array_equal(ch[0][i], base.h[k])


def test_dual_rejects_boundary_subset():
    g = YeeGrid.uniform(1, 1, 50, 1e-3, 1e-3, 1e-3)
    p = DesignParameter("edge", CellSubset((50,), "z"))
    with pytest.raises(ValueError, match="absorbing"):
        dual_run(g, SimulationConfig(1e-12, 10), [], [], [(p, 1.0)], 1)


def test_dual_matches_series_of_perturbed_runs(toy):
    # Taylor coefficients reproduce perturbed forward runs to O(h^(M+1))
    s = toy.replace(nsteps=3000)
    p = s.parameter("db")
    src, probe = [ports.port_source(s)], [ports.port_probe(s)]
    dual = dual_run(s.grid, s.config, src, probe, [(p, 1.0)], 3)["port"]
    errs = []
    for h in (0.2 * s.dz, 0.1 * s.dz):
        exact = run(perturb(s.grid, p.subset, h), s.config, src, probe)["port"]
        series = sum(dual[m] * h**m for m in range(4))
        errs.append(np.abs(exact - series).max() / np.abs(exact).max())
    assert errs[1] < errs[0] / 10  # fourth-order remainder: ratio ~16
    assert errs[1] < 1e-5


def test_dual_run_counts_one(toy):
    res = dual_fdtd(toy, "da", 2)
    assert res.run_count == 1
    assert set(res.derivs) == {1, 2}


def test_cfd_converges_to_dual(toy):
    d1 = dual_fdtd(toy, "db", 1).derivs[1]
    model = scenario_model(toy)
    errs = [rel_l2(cfd_first(model, "db", f * toy.dz), d1) for f in (0.4, 0.2, 0.1)]
    assert errs[2] < 0.005
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.15)


def test_cfd_default_step_within_three_percent(toy):
    model = scenario_model(toy)
    for name in ("da", "ea"):
        ref = dual_fdtd(toy, name, 1).derivs[1]
        assert rel_l2(cfd_first(model, name, toy.default_step(name)), ref) < 0.03


def test_cfd_on_dual_nominal(toy):
    # central difference of the oracle's own order-0 output
    def model(offsets):
        grid = toy.grid
        for n, d in offsets.items():
            grid = perturb(grid, toy.parameter(n).subset, d)
        rec = dual_run(grid, toy.config, [ports.port_source(toy)], [ports.port_probe(toy)], [], 0)["port"][0]
        return ports.s11(toy, rec, warn=False)

    ref = dual_fdtd(toy, "da", 1).derivs[1]
    e1 = rel_l2(cfd_first(model, "da", 0.2 * toy.dz), ref)
    e2 = rel_l2(cfd_first(model, "da", 0.1 * toy.dz), ref)
    assert e2 < e1 / 3


def test_dual_mixed_against_cfd(toy):
    mixed = dual_mixed(toy, "da", "db")
    ref = cfd_mixed(scenario_model(toy), "da", "db", 0.1 * toy.dz, 0.1 * toy.dz)
    assert rel_l2(mixed, ref) < 0.02


def test_dual_second_against_cfd(toy):
    d2 = dual_fdtd(toy, "eb", 2).derivs[2]
    ref = cfd_second(scenario_model(toy), "eb", 0.03)
    assert rel_l2(d2, ref) < 0.02


def test_third_order_finite_and_smooth(toy):
    d3 = dual_fdtd(toy, "db", 3).derivs[3]
    band = np.isfinite(d3)
    assert band.sum() > 100
    v = d3[band]
    assert np.all(np.isfinite(v)) and np.abs(v).max() > 0
    # well resolved: second differences of a sampled oscillation are about the phase step
    # times the first differences; uncorrelated noise would give a ratio near 2
    assert np.abs(np.diff(v, 2)).max() < 0.6 * np.abs(np.diff(v)).max()


def test_field_observable(toy):
    s = toy.replace(nsteps=3000)
    res = dual_fdtd(s, "da", 1, observable="field")
    rec = run(s.grid, s.config, [ports.port_source(s)], [ports.port_probe(s)])["port"]
    spec = dft_settled(rec, s.dt, s.freqs)
    v = np.isfinite(res.nominal)
    np.testing.assert_allclose(res.nominal[v], spec[v], rtol=1e-12)
