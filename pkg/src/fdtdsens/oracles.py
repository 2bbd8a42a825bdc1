"""Reference derivatives that do not use equivalent sources or transfer functions.

``dual_fdtd`` differentiates the update recursion itself: cell sizes and
permittivities of the chosen subsets become truncated polynomials in the
perturbation, so every update coefficient and every field value carries its
Taylor coefficients through the time loop. ``cfd_*`` difference complete
forward runs on perturbed meshes. Both work on the same discrete map as the
main method, so disagreement beyond truncation error points at a bug.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import kernels, ports
from .engine import (RUN_COUNTER, Simulation, _flat, _pad_cells, edge_average, node_shape, run,
                     update_coefficients)
from .grid import AXES, YeeGrid, perturb
from .polyvalue import poly_mul, poly_reciprocal
from .spectral import dft_settled

_ORDER_3D = [(0, 1), (0, 2), (1, 2), (1, 0), (2, 0), (2, 1)]


# -- forward-mode FDTD --------------------------------------------------------------

def _indicator(grid: YeeGrid, subset) -> np.ndarray:
    ind = np.zeros(grid.shape)
    for p in subset.indices:
        ind[grid.cell(p)] = 1.0
    return ind


def _check_interior(grid: YeeGrid, config, subset) -> None:
    for p in subset.indices:
        cell = grid.cell(p)
        for a, ax in enumerate(AXES):
            if grid.is_1d and a < 2:
                continue
            for face, at in ((ax + "lo", 0), (ax + "hi", grid.shape[a] - 1)):
                if cell[a] == at and config.boundary.get(face) == "mur":
                    raise ValueError(f"subset cell {p} touches the absorbing boundary {face}")


def lifted_coefficients(grid: YeeGrid, dt: float, directions, order: int):
    """Taylor coefficients (order+1, ...) of every update coefficient array.

    ``directions`` is a sequence of ``(DesignParameter, weight)``; the
    perturbation moves every parameter by ``weight * d``. Order 0 equals
    :func:`engine.update_coefficients` bit for bit.
    """
    base = update_coefficients(grid, dt)
    sizes = {a: np.zeros((order + 1,) + grid.shape) for a in range(3)}
    eps = np.zeros((order + 1,) + grid.shape)
    for a in range(3):
        sizes[a][0] = grid.sizes(AXES[a])
    eps[0] = grid.eps_r
    for param, w in directions:
        if order < 1 or w == 0:
            continue
        ind = _indicator(grid, param.subset)
        if param.kind == "material":
            eps[1] += w * ind
        else:
            sizes[AXES.index(param.subset.axis)][1] += w * ind

    def lift(base_arr, denom):
        # base * (denom / denom[0])^-1 keeps order 0 identical to the engine's value
        r = poly_reciprocal(denom / denom[0])
        return np.ascontiguousarray(base_arr[None] * r)

    if grid.is_1d:
        dz, ep = sizes[2][:, 0, 0, :], eps[:, 0, 0, :]
        ce = lift(base.e[(0, 2)], poly_mul(ep, dz))
        ch = lift(base.h[(0, 2)], dz)
        return [ce[m] for m in range(order + 1)], [ch[m] for m in range(order + 1)]
    eps_edge = [np.stack([edge_average(grid, eps[m], c, fill=1.0 if m == 0 else 0.0) for m in range(order + 1)])
                for c in range(3)]
    padded = {a: np.stack([_pad_cells(sizes[a][m]) for m in range(order + 1)]) for a in range(3)}
    ce = {k: lift(base.e[k], poly_mul(eps_edge[k[0]], padded[k[1]])) for k in _ORDER_3D}
    ch = {k: lift(base.h[k], sizes[k[1]]) for k in _ORDER_3D}
    return ([[ce[k][m] for k in _ORDER_3D] for m in range(order + 1)],
            [[ch[k][m] for k in _ORDER_3D] for m in range(order + 1)])


def _nonzero(c) -> bool:
    if isinstance(c, list):
        return any(np.any(a) for a in c)
    return bool(np.any(c))


def dual_run(grid: YeeGrid, config, sources, probes, directions, order: int) -> dict:
    """One forward run carrying Taylor coefficients up to ``order``.

    Returns ``{probe: array (order+1, nsteps[, nodes])}``; entry m is the m-th
    Taylor coefficient, i.e. the m-th derivative divided by m!.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    for param, _ in directions:
        _check_interior(grid, config, param.subset)
    RUN_COUNTER.increment()
    ce, ch = lifted_coefficients(grid, config.dt, directions, order)
    live_e = [_nonzero(c) for c in ce]
    live_h = [_nonzero(c) for c in ch]
    base = update_coefficients(grid, config.dt)
    sims = [Simulation(grid, config, base) for _ in range(order + 1)]
    one_d = grid.is_1d
    upd_h = kernels.update_h_1d if one_d else kernels.update_h_3d
    upd_e = kernels.update_e_1d if one_d else kernels.update_e_3d

    def call(fn, e, h, c):
        if one_d:
            fn(e[0], h[0], c)
        else:
            fn(*e, *h, *c)

    nsteps = config.nsteps
    srcs = {"E": [], "H": []}
    for s in sources:
        srcs[s.kind].append((s.comp, _flat(node_shape(grid, s.kind), s.nodes), s.weights, s.waveform))
    recs, plan = {}, []
    for p in probes:
        n_out = 1 if p.reduce == "sum" else len(p.nodes)
        recs[p.name] = np.zeros((order + 1, nsteps, n_out))
        plan.append((p, _flat(node_shape(grid, p.kind), p.nodes)))

    def record(kind, n):
        for p, flat in plan:
            if p.kind != kind:
                continue
            for m, sim in enumerate(sims):
                vals = sim.state.field(kind)[p.comp].reshape(-1)[flat]
                recs[p.name][m, n] = vals.sum() if p.reduce == "sum" else vals

    for n in range(nsteps):
        for m in range(order + 1):
            for q in range(m + 1):
                if live_h[m - q]:
                    call(upd_h, sims[q].state.e, sims[m].state.h, ch[m - q])
        for comp, flat, w, wf in srcs["H"]:
            sims[0].state.h[comp].reshape(-1)[flat] += w * wf[n]
        record("H", n)
        olds = [sim._mur_save() for sim in sims]
        for m in range(order + 1):
            for q in range(m + 1):
                if live_e[m - q]:
                    call(upd_e, sims[m].state.e, sims[q].state.h, ce[m - q])
        for comp, flat, w, wf in srcs["E"]:
            sims[0].state.e[comp].reshape(-1)[flat] += w * wf[n]
        for sim, old in zip(sims, olds):
            sim.finish_e(old)
            sim.n += 1
        record("E", n)
        if (n + 1) % config.check_every == 0 or n == nsteps - 1:
            for sim in sims:
                sim.check_finite()
    return {p.name: (recs[p.name][..., 0] if p.reduce == "sum" else recs[p.name]) for p, _ in plan}


@dataclass
class OracleResult:
    """Observable spectra from an oracle: ``nominal`` and ``derivs[m]`` (m >= 1)."""

    name: str
    freqs: np.ndarray
    nominal: np.ndarray | None
    derivs: dict
    run_count: int
    h: float | None = None


def _directions(scenario, params) -> list:
    if isinstance(params, str):
        params = {params: 1.0}
    elif not isinstance(params, Mapping):
        params = {p: 1.0 for p in params}
    return [(scenario.parameter(n), float(w)) for n, w in params.items()]


def dual_fdtd(scenario, params, order: int, observable: str = "S11") -> OracleResult:
    """Exact derivatives of orders 1..``order`` along a parameter direction.

    ``params`` is a name, a list of names (unit weights) or ``{name: weight}``;
    the result differentiates along that direction.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    before = RUN_COUNTER.value
    dirs = _directions(scenario, params)
    rec = dual_run(scenario.grid, scenario.config, [ports.port_source(scenario)], [ports.port_probe(scenario)],
                   dirs, order)["port"]
    spec = dft_settled(rec.T, scenario.dt, scenario.freqs).T  # (order+1, nfreq)
    nominal = ports.s11(scenario, rec[0]) if observable == "S11" else ports.to_observable(scenario, spec[0], "field")
    derivs = {m: ports.to_observable(scenario, math.factorial(m) * spec[m], observable) for m in range(1, order + 1)}
    return OracleResult("dual", scenario.freqs, nominal, derivs, RUN_COUNTER.value - before)


def dual_mixed(scenario, u: str, v: str, observable: str = "S11") -> np.ndarray:
    """Mixed second derivative by polarization of three directional second derivatives."""
    duv = dual_fdtd(scenario, {u: 1.0, v: 1.0}, 2, observable).derivs[2]
    du = dual_fdtd(scenario, u, 2, observable).derivs[2]
    dv = dual_fdtd(scenario, v, 2, observable).derivs[2]
    return 0.5 * (duv - du - dv)


# -- central finite differences --------------------------------------------------------

Model = Callable[[Mapping[str, float]], np.ndarray]


def scenario_model(scenario, observable: str = "S11") -> Model:
    """Observable spectrum of the scenario with named parameters offset by given amounts."""

    def model(offsets: Mapping[str, float]) -> np.ndarray:
        grid = scenario.grid
        for name, delta in offsets.items():
            if delta:
                grid = perturb(grid, scenario.parameter(name).subset, delta)
        rec = run(grid, scenario.config, [ports.port_source(scenario)], [ports.port_probe(scenario)])["port"]
        if observable == "S11":
            return ports.s11(scenario, rec, warn=False)
        spec = dft_settled(rec, scenario.dt, scenario.freqs)
        return ports.to_observable(scenario, spec, "field")

    return model


def _check_h(h: float) -> None:
    if not h > 0:
        raise ValueError("step h must be positive")


def cfd_first(model: Model, name: str, h: float) -> np.ndarray:
    """(X(+h) - X(-h)) / 2h."""
    _check_h(h)
    return (model({name: h}) - model({name: -h})) / (2 * h)


def cfd_second(model: Model, name: str, h: float) -> np.ndarray:
    """(X(+h) - 2 X(0) + X(-h)) / h^2."""
    _check_h(h)
    return (model({name: h}) - 2 * model({}) + model({name: -h})) / h**2


def cfd_mixed(model: Model, u: str, v: str, hu: float, hv: float) -> np.ndarray:
    """Four-corner stencil (X(+,+) - X(+,-) - X(-,+) + X(-,-)) / 4 hu hv."""
    _check_h(hu)
    _check_h(hv)
    if u == v:
        raise ValueError("mixed stencil needs two different parameters")
    pp = model({u: hu, v: hv})
    pm = model({u: hu, v: -hv})
    mp = model({u: -hu, v: hv})
    mm = model({u: -hu, v: -hv})
    return (pp - pm - mp + mm) / (4 * hu * hv)
