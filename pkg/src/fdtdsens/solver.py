"""Field and S-parameter derivatives from equivalent sources.

Every task runs one main simulation excited at the port. It yields the
nominal port record, the stencil inputs of every parameter (hence the
first-order equivalent sources) and the fields at all source nodes. The
transfer function from a source node back to the port follows from those
fields by reciprocity of the discrete scheme:

    G(port <- E node s) = (W_s / W_p) * R_s / w
    G(port <- H node s) = -z * (W_s / W_p) * R_s / w,    z = exp(2j pi f dt)

where R_s is the spectrum recorded at s, w the excitation spectrum and W the
energy weight of a node (eps0 eps_r V for E, mu0 mu_r V for H). Higher orders
and mixed derivatives also need transfer functions between the nodes of the
affected subsets; each subset gets one extra run that drives its source nodes
one after another in separate time windows.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ports
from .constants import EPS0, MU0
from .engine import (REFERENCE_COUNTER, RUN_COUNTER, ProbeSpec, SimulationConfig, SourceSpec, _pad_cells, run,
                     update_coefficients)
from .eqsources import EquivalentSourceSampler
from .params import build_stencil, check_disjoint
from .spectral import (Spectrum, TransferFunction, check_decay, dft_records, dft_settled, propagate, settled_level, step_tail,
                       valid_band)


class RunBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunBudget:
    """Forward runs a task may use: 1 (Jacobian), 2 (high order), N+1 (mixed, Hessian)."""

    task: str
    n_params: int

    @property
    def expected(self) -> int:
        if self.task == "jacobian":
            return 1
        if self.task == "high-order":
            return 2
        if self.task in ("mixed", "hessian"):
            return self.n_params + 1
        raise ValueError(f"no run budget for task {self.task!r}")

    def check(self, used: int) -> None:
        if used != self.expected:
            raise RunBudgetError(f"{self.task}: used {used} forward runs, budget is {self.expected}")


@dataclass
class DerivativeResult:
    """Derivative spectrum of ``observable`` for a multi-index like (("d1", 2),)."""

    observable: str
    index: tuple
    freqs: np.ndarray
    values: np.ndarray  # NaN outside the valid band
    valid: np.ndarray

    @property
    def order(self) -> int:
        return sum(k for _, k in self.index)

    @property
    def label(self) -> str:
        return "_".join(f"{n}{k if k > 1 else ''}" for n, k in self.index)


@dataclass
class SolverReport:
    task: str
    results: dict
    run_count: int
    reference_runs: int
    nominal: np.ndarray
    records: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.results[key]


# -- helpers ---------------------------------------------------------------------------

def node_weights(grid, coeffs, nodes) -> np.ndarray:
    vol = grid.dx * grid.dy * grid.dz
    out = np.empty(len(nodes))
    if grid.is_1d:
        v = vol[0, 0, :]
        for i, (kind, _, (k,)) in enumerate(nodes):
            out[i] = (EPS0 * coeffs.eps_edge[0][k] if kind == "E" else MU0 * grid.mu_r[0, 0, k]) * v[k]
        return out
    vp = _pad_cells(vol)
    for i, (kind, c, node) in enumerate(nodes):
        out[i] = EPS0 * coeffs.eps_edge[c][node] * vp[node] if kind == "E" else MU0 * grid.mu_r[node] * vol[node]
    return out


def _probe_groups(nodes, prefix: str):
    """One ProbeSpec per (kind, comp) and the positions it covers in ``nodes``."""
    groups: dict = {}
    for i, (kind, comp, node) in enumerate(nodes):
        groups.setdefault((kind, comp), []).append(i)
    return [(ProbeSpec(f"{prefix}{kind}{comp}", kind, comp, [nodes[i][2] for i in pos], reduce="none"), pos)
            for (kind, comp), pos in sorted(groups.items())]


def _collect(records, groups, nsteps, n) -> np.ndarray:
    out = np.zeros((nsteps, n))
    for probe, pos in groups:
        out[:, pos] = records[probe.name]
    return out


def _lag(freqs, dt, nodes) -> np.ndarray:
    """z^-1 for E inputs (consumed one step after they are recorded), 1 for H."""
    zinv = np.exp(-2j * np.pi * freqs * dt)
    lag = np.array([1 if kind == "E" else 0 for kind, _, _ in nodes])
    return zinv[:, None] ** lag[None, :]


class _Analysis:
    """Shared state of one task: scenario, stencils, main run and subset runs."""

    def __init__(self, scenario, names, threads: int = 1):
        self.scenario = scenario
        self.grid = scenario.grid
        self.coeffs = update_coefficients(self.grid, scenario.dt)
        self.params = scenario.parameters(names)
        self.stencils = {p.name: build_stencil(self.grid, self.coeffs, p) for p in self.params}
        self.freqs = scenario.freqs
        self.dt = scenario.dt
        self.threads = max(1, int(threads))
        self.messages: list = []
        w = ports.excitation_spectrum(scenario)
        self.excitation = w
        self.valid = valid_band(w)
        if not self.valid.any():
            raise ValueError("empty valid band: the excitation has no energy on the frequency grid")
        pn = [("E", scenario.port_comp, n) for n in scenario.port_nodes]
        wp = node_weights(self.grid, self.coeffs, pn)
        if not np.allclose(wp, wp[0], rtol=1e-12, atol=0):
            raise ValueError("port nodes must share one material; reciprocity needs equal node weights")
        self.port_weight = wp[0]

    # runs ----------------------------------------------------------------------
    def main_run(self):
        sc = self.scenario
        src_nodes = list(dict.fromkeys(n for st in self.stencils.values() for n in st.src_nodes))
        groups = _probe_groups(src_nodes, "src:")
        sampler = EquivalentSourceSampler(self.grid, self.stencils.values(), sc.nsteps)
        recs = run(self.grid, sc.config, [ports.port_source(sc)], [ports.port_probe(sc)] + [g for g, _ in groups],
                   samplers=[sampler], coeffs=self.coeffs)
        self._note(check_decay(recs["port"], f"{sc.name}: port record"))
        self.port_record = recs["port"]
        self.records = sampler.records()
        self.src_nodes = src_nodes
        at_src = _collect(recs, groups, sc.nsteps, len(src_nodes))
        spec = dft_settled(at_src, self.dt, self.freqs)  # (nf, nsrc)
        ratio = np.where(self.valid[:, None], spec / np.where(self.valid, self.excitation, 1)[:, None], 0)
        w = node_weights(self.grid, self.coeffs, src_nodes) / self.port_weight
        z = np.exp(2j * np.pi * self.freqs * self.dt)
        is_h = np.array([kind == "H" for kind, _, _ in src_nodes])
        phase = np.where(is_h[None, :], -z[:, None], 1.0)
        g = ratio * w[None, :] * phase
        self.to_port = {n: g[:, i] for i, n in enumerate(src_nodes)}
        self.inputs = {name: dft_settled(rec.inputs, self.dt, self.freqs) for name, rec in self.records.items()}

    def subset_run(self, name: str, observe: list):
        """Transfer functions (nf, n_observe, n_src) from the source nodes of ``name``."""
        sc = self.scenario
        st = self.stencils[name]
        gate = sc.gate
        nsrc = len(st.src_nodes)
        if nsrc == 0 or not observe:
            # nothing to drive or read; the (source-free) run keeps the budget uniform
            run(self.grid, SimulationConfig(sc.dt, gate, dict(sc.boundary)), coeffs=self.coeffs)
            return np.zeros((len(self.freqs), len(observe), nsrc), dtype=complex)
        pulse = sc.waveform(gate)
        total = nsrc * gate
        sources = []
        for i, (kind, comp, node) in enumerate(st.src_nodes):
            wf = np.zeros(total)
            wf[i * gate:(i + 1) * gate] = pulse
            sources.append(SourceSpec(kind, comp, [node], wf))
        groups = _probe_groups(observe, "obs:")
        config = SimulationConfig(sc.dt, total, dict(sc.boundary))
        recs = run(self.grid, config, sources, [g for g, _ in groups], coeffs=self.coeffs)
        data = _collect(recs, groups, total, len(observe))
        wspec = dft_records(pulse, self.dt, self.freqs)
        out = np.zeros((len(self.freqs), len(observe), nsrc), dtype=complex)
        baseline = np.zeros(len(observe))
        for i in range(nsrc):
            # static charge from earlier windows persists; each window ends in its own constant
            seg = data[i * gate:(i + 1) * gate] - baseline
            level = settled_level(seg)
            self._note(check_decay(seg - level, f"{sc.name}: window {i} of subset run {name!r}"))
            spec = dft_records(seg, self.dt, self.freqs) + step_tail(level, gate, self.dt, self.freqs)
            out[:, :, i] = spec / np.where(self.valid, wspec, 1)[:, None]
            baseline = baseline + level
        out[~self.valid] = 0
        return out

    def run_all(self, subset_names=()):
        """Main run plus one subset run per name, concurrently up to ``threads``."""
        observe = list(dict.fromkeys(n for st in self.stencils.values() for n in st.obs_nodes))
        self.observe = {n: i for i, n in enumerate(observe)}
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            main = pool.submit(self.main_run)
            futs = {name: pool.submit(self.subset_run, name, observe) for name in subset_names}
            main.result()
            self.tf = {name: f.result() for name, f in futs.items()}

    def _note(self, msg):
        if msg:
            self.messages.append(msg)

    # frequency-domain assembly ---------------------------------------------------
    def first_order_sources(self, name: str) -> np.ndarray:
        st = self.stencils[name]
        if not st.src_nodes:
            return np.zeros((len(self.freqs), 0), dtype=complex)
        return st.assemble(1, self.inputs[name].T).T  # (nf, nsrc)

    def to_port_field(self, name: str, sources: np.ndarray) -> np.ndarray:
        st = self.stencils[name]
        if not st.src_nodes:
            return np.zeros(len(self.freqs), dtype=complex)
        tfs = {n: TransferFunction(n, "port", Spectrum(self.freqs, self.to_port[n], self.valid)) for n in st.src_nodes}
        src = {n: Spectrum(self.freqs, sources[:, i]) for i, n in enumerate(st.src_nodes)}
        return propagate(tfs, src).values

    def obs_response(self, target: str, source: str, sources: np.ndarray) -> np.ndarray:
        """Stencil inputs of ``target`` produced by sources of ``source`` (nf, n_obs)."""
        st_t = self.stencils[target]
        cols = [self.observe[n] for n in st_t.obs_nodes]
        g = self.tf[source][:, cols, :]
        return _lag(self.freqs, self.dt, st_t.obs_nodes) * np.einsum("fos,fs->fo", g, sources)

    def high_order_sources(self, name: str, order: int) -> list:
        """Equivalent-source spectra of orders 1..order (list index m-1)."""
        st = self.stencils[name]
        if not st.src_nodes:
            return [np.zeros((len(self.freqs), 0), dtype=complex)] * order
        x = [self.inputs[name]]
        s = [None, self.first_order_sources(name)]
        for m in range(2, order + 1):
            x.append(self.obs_response(name, name, s[m - 1]))
            acc = np.zeros_like(s[1])
            for q in range(m):
                acc += math.comb(m, q) * st.assemble(m - q, x[q].T).T
            s.append(acc)
        return s[1:]

    def mixed_field(self, u: str, v: str) -> np.ndarray:
        su, sv = self.first_order_sources(u), self.first_order_sources(v)
        out = np.zeros(len(self.freqs), dtype=complex)
        if self.stencils[u].src_nodes and sv.size:
            out += self.to_port_field(u, self.stencils[u].assemble(1, self.obs_response(u, v, sv).T).T)
        if self.stencils[v].src_nodes and su.size:
            out += self.to_port_field(v, self.stencils[v].assemble(1, self.obs_response(v, u, su).T).T)
        return out

    def result(self, index, field_spectrum, observable) -> DerivativeResult:
        vals = ports.to_observable(self.scenario, field_spectrum, observable)
        return DerivativeResult(observable, tuple(index), self.freqs, vals, self.valid.copy())

    def nominal(self, observable) -> np.ndarray:
        if observable == "S11":
            return ports.s11(self.scenario, self.port_record, warn=False)
        return ports.to_observable(self.scenario, dft_settled(self.port_record, self.dt, self.freqs), "field")


def _finish(task, analysis, results, observable, before, ref_before, n_params) -> SolverReport:
    used = RUN_COUNTER.value - before
    RunBudget(task, n_params).check(used)
    for msg in analysis.messages:
        warnings.warn(msg, stacklevel=3)
    return SolverReport(task, results, used, REFERENCE_COUNTER.value - ref_before, analysis.nominal(observable),
                        analysis.records, list(analysis.messages))


# -- tasks -------------------------------------------------------------------------------

def jacobian(scenario, names=None, observable: str = "S11", threads: int = 1) -> SolverReport:
    """First derivatives of the port observable w.r.t. every named parameter (one run)."""
    before, ref_before = RUN_COUNTER.value, REFERENCE_COUNTER.value
    an = _Analysis(scenario, names, threads)
    an.run_all()
    results = {}
    for p in an.params:
        fld = an.to_port_field(p.name, an.first_order_sources(p.name))
        results[p.name] = an.result(((p.name, 1),), fld, observable)
    return _finish("jacobian", an, results, observable, before, ref_before, len(an.params))


def high_order(scenario, name: str, order: int, observable: str = "S11", threads: int = 1) -> SolverReport:
    """Derivatives of orders 1..order w.r.t. one parameter (two runs)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    before, ref_before = RUN_COUNTER.value, REFERENCE_COUNTER.value
    an = _Analysis(scenario, [name], threads)
    an.run_all([name])
    results = {}
    for m, src in enumerate(an.high_order_sources(name, order), 1):
        results[m] = an.result(((name, m),), an.to_port_field(name, src), observable)
    return _finish("high-order", an, results, observable, before, ref_before, 1)


def mixed(scenario, u: str, v: str, observable: str = "S11", threads: int = 1) -> SolverReport:
    """Mixed second derivative w.r.t. two parameters with disjoint subsets (three runs)."""
    if u == v:
        raise ValueError("mixed derivative needs two different parameters; use high_order for the diagonal")
    a, b = sorted((u, v))
    check_disjoint(scenario.parameters([a, b]))
    before, ref_before = RUN_COUNTER.value, REFERENCE_COUNTER.value
    an = _Analysis(scenario, [a, b], threads)
    an.run_all([a, b])
    res = an.result(((a, 1), (b, 1)), an.mixed_field(a, b), observable)
    mirrored = DerivativeResult(res.observable, ((b, 1), (a, 1)), res.freqs, res.values, res.valid)
    results = {(a, b): res, (b, a): mirrored}
    return _finish("mixed", an, results, observable, before, ref_before, 2)


def hessian(scenario, names=None, observable: str = "S11", threads: int = 1) -> SolverReport:
    """Full N x N Hessian (N+1 runs); ``results[(u, v)]`` for every ordered pair."""
    before, ref_before = RUN_COUNTER.value, REFERENCE_COUNTER.value
    an = _Analysis(scenario, names, threads)
    check_disjoint(an.params)
    order = [p.name for p in an.params]
    an.run_all(order)
    results = {}
    for name in order:
        src = an.high_order_sources(name, 2)
        results[(name, name)] = an.result(((name, 2),), an.to_port_field(name, src[1]), observable)
    for i, u in enumerate(order):
        for v in order[i + 1:]:
            a, b = sorted((u, v))
            res = an.result(((a, 1), (b, 1)), an.mixed_field(a, b), observable)
            results[(a, b)] = res
            results[(b, a)] = DerivativeResult(res.observable, ((b, 1), (a, 1)), res.freqs, res.values, res.valid)
    return _finish("hessian", an, results, observable, before, ref_before, len(order))


def s_param_derivative(field_derivative, incident, valid=None) -> np.ndarray:
    """dS/dxi = d(scattered field)/dxi / incident, NaN outside the valid band."""
    inc = np.asarray(incident, dtype=complex)
    if valid is None:
        valid = valid_band(inc)
    out = np.full(inc.shape, np.nan, dtype=complex)
    out[valid] = np.asarray(field_derivative, dtype=complex)[valid] / inc[valid]
    return out


def taylor_eval(nominal, derivatives, delta: float) -> np.ndarray:
    """nominal + sum_m derivatives[m-1] delta^m / m!."""
    out = np.array(nominal, dtype=complex)
    for m, d in enumerate(derivatives, 1):
        out = out + np.asarray(d) * delta**m / math.factorial(m)
    return out
