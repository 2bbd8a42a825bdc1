"""Leapfrog Yee time stepping with soft sources, PEC and first-order Mur ABC.

Time-index convention used everywhere in the package: during step ``n``
(``n = 0 .. nsteps-1``) the magnetic field is advanced to ``H^{n+1/2}`` and
then the electric field to ``E^{n+1}``. Probe records store ``h[n] = H^{n+1/2}``
and ``e[n] = E^{n+1}``; an additive source value ``s[n]`` is added to the
component right after its curl update in step ``n``. With this labelling the
whole scheme is a causal linear recursion in ``n``, so ratios and products of
the records' spectra are exact transfer relations.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .constants import C0, EPS0, MU0
from .grid import AXES, YeeGrid

FACES = ("xlo", "xhi", "ylo", "yhi", "zlo", "zhi")

# per component: (derivative axis, sign, component of the other field) for each curl term
E_TERMS = {
    0: ((1, +1, 2), (2, -1, 1)),  # Ex += c_xy dHz/dy - c_xz dHy/dz
    1: ((2, +1, 0), (0, -1, 2)),  # Ey += c_yz dHx/dz - c_yx dHz/dx
    2: ((0, +1, 1), (1, -1, 0)),  # Ez += c_zx dHy/dx - c_zy dHx/dy
}
H_TERMS = {
    0: ((1, -1, 2), (2, +1, 1)),  # Hx -= c_xy dEz/dy - c_xz dEy/dz
    1: ((2, -1, 0), (0, +1, 2)),
    2: ((0, -1, 1), (1, +1, 0)),
}


class NumericalInstability(RuntimeError):
    pass


class RunCounter:
    """Thread-safe count of forward FDTD runs."""

    def __init__(self):
        self._lock = threading.Lock()
        self._value = 0

    def increment(self) -> int:
        with self._lock:
            self._value += 1
            return self._value

    @property
    def value(self) -> int:
        with self._lock:
            return self._value


RUN_COUNTER = RunCounter()
# Incident-field calibration runs on feed-only structures; kept out of the budget.
REFERENCE_COUNTER = RunCounter()


def gaussian(t, t0: float, ts: float):
    if ts <= 0:
        raise ValueError("pulse width must be positive")
    t = np.asarray(t, dtype=float)
    return np.exp(-((t - t0) ** 2) / ts**2)


def cfl_limit(grid: YeeGrid) -> float:
    if grid.is_1d:
        return float(np.min(grid.dz)) / C0
    s = 1.0 / grid.dx**2 + 1.0 / grid.dy**2 + 1.0 / grid.dz**2
    return 1.0 / (C0 * math.sqrt(float(np.max(s))))


def _pad_cells(a: np.ndarray) -> np.ndarray:
    """Extend a per-cell array to the (nx+1, ny+1, nz+1) E-node shape."""
    return np.pad(a, ((0, 1), (0, 1), (0, 1)), mode="edge")


def edge_average(grid: YeeGrid, values: np.ndarray, comp: int, fill: float = 1.0) -> np.ndarray:
    """Arithmetic mean of ``values`` over the cells sharing each E edge of ``comp``.

    An Ex edge at node (i, j, k) touches cells (i, j-1:j, k-1:k); cells outside
    the grid are dropped from the mean. Nodes touching no cell (unused) get ``fill``.
    """
    nx, ny, nz = grid.shape
    padded = np.full((nx + 2, ny + 2, nz + 2), np.nan)
    padded[1:-1, 1:-1, 1:-1] = values
    spans = [(0,) if a == comp else (-1, 0) for a in range(3)]
    stack = []
    for sx in spans[0]:
        for sy in spans[1]:
            for sz in spans[2]:
                stack.append(padded[sx + 1:sx + nx + 2, sy + 1:sy + ny + 2, sz + 1:sz + nz + 2])
    stack = np.stack(stack)
    cnt = np.sum(~np.isnan(stack), axis=0)
    total = np.nansum(stack, axis=0)
    return np.where(cnt > 0, total / np.maximum(cnt, 1), fill)


@dataclass
class Coefficients:
    """Per-node update coefficients.

    ``e[(c, d)]`` multiplies the d-derivative term of the E_c update,
    i.e. dt / (eps0 * eps_c * size_d); ``h[(c, d)]`` likewise with mu.
    In 1-D only ``(0, 2)`` exists (Ex driven by dHy/dz, Hy by dEx/dz).
    """

    dt: float
    e: dict
    h: dict
    eps_edge: tuple  # effective relative permittivity per E component
    is_1d: bool


def update_coefficients(grid: YeeGrid, dt: float) -> Coefficients:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if grid.is_1d:
        dz = grid.dz[0, 0, :]
        eps = grid.eps_r[0, 0, :].copy()
        e = {(0, 2): dt / (EPS0 * eps * dz)}
        h = {(0, 2): dt / (MU0 * grid.mu_r[0, 0, :] * dz)}
        return Coefficients(dt, e, h, (eps,), True)
    sizes = {a: _pad_cells(grid.sizes(AXES[a])) for a in range(3)}
    eps_edge = tuple(edge_average(grid, grid.eps_r, c) for c in range(3))
    mu = grid.mu_r
    e, h = {}, {}
    for c, terms in E_TERMS.items():
        for d, _, _ in terms:
            e[(c, d)] = np.ascontiguousarray(dt / (EPS0 * eps_edge[c] * sizes[d]))
            h[(c, d)] = np.ascontiguousarray(dt / (MU0 * mu * grid.sizes(AXES[d])))
    return Coefficients(dt, e, h, eps_edge, False)


@dataclass
class FieldState:
    """E and H component arrays. 1-D states hold a single (Ex, Hy) pair."""

    e: list
    h: list

    @classmethod
    def zeros(cls, grid: YeeGrid) -> "FieldState":
        if grid.is_1d:
            return cls([np.zeros(grid.nz)], [np.zeros(grid.nz)])
        es = (grid.nx + 1, grid.ny + 1, grid.nz + 1)
        return cls([np.zeros(es) for _ in range(3)], [np.zeros(grid.shape) for _ in range(3)])

    def copy(self) -> "FieldState":
        return FieldState([a.copy() for a in self.e], [a.copy() for a in self.h])

    def field(self, kind: str) -> list:
        return self.e if kind == "E" else self.h


@dataclass
class SourceSpec:
    """Additive (soft) source: ``waveform[n]`` times ``weights`` added at ``nodes`` in step n."""

    kind: str  # "E" or "H"
    comp: int
    nodes: Sequence[tuple]  # 0-based array positions
    waveform: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.waveform = np.asarray(self.waveform, dtype=float)
        self.nodes = [tuple(int(v) for v in n) for n in self.nodes]
        if self.weights is None:
            self.weights = np.ones(len(self.nodes))
        self.weights = np.asarray(self.weights, dtype=float)


@dataclass
class ProbeSpec:
    """Records a component at ``nodes`` every step (summed unless ``reduce='none'``)."""

    name: str
    kind: str
    comp: int
    nodes: Sequence[tuple]
    reduce: str = "sum"

    def __post_init__(self):
        self.nodes = [tuple(int(v) for v in n) for n in self.nodes]


@dataclass
class SimulationConfig:
    dt: float
    nsteps: int
    boundary: dict = field(default_factory=lambda: {f: "mur" for f in FACES})
    check_every: int = 64

    def __post_init__(self):
        if isinstance(self.boundary, str):
            self.boundary = {f: self.boundary for f in FACES}
        bad = {v for v in self.boundary.values()} - {"mur", "pec"}
        if bad:
            raise ValueError(f"unknown boundary kind(s) {sorted(bad)}")


def _flat(shape, nodes) -> np.ndarray:
    if not nodes:
        return np.zeros(0, dtype=np.intp)
    return np.ravel_multi_index(tuple(np.array(n) for n in zip(*nodes)), shape)


class Simulation:
    """Owns field arrays and steps them; see module docstring for the time labels."""

    def __init__(self, grid: YeeGrid, config: SimulationConfig, coeffs: Coefficients | None = None):
        self.grid = grid
        self.config = config
        self.coeffs = coeffs or update_coefficients(grid, config.dt)
        self.state = FieldState.zeros(grid)
        self.n = 0
        self._mur = self._build_mur()
        self._pec = None if grid.is_1d else [np.nonzero(m) for m in grid.pec]
        self._pec1d = None
        if grid.is_1d:
            z = np.nonzero(grid.pec[0][0, 0, : grid.nz])[0]
            self._pec1d = z if z.size else None
        c = self.coeffs
        if grid.is_1d:
            self._ce, self._ch = c.e[(0, 2)], c.h[(0, 2)]
        else:
            order = [(0, 1), (0, 2), (1, 2), (1, 0), (2, 0), (2, 1)]
            self._ce = [c.e[k] for k in order]
            self._ch = [c.h[k] for k in order]

    # boundaries ---------------------------------------------------------
    def _build_mur(self):
        g, dt = self.grid, self.config.dt
        faces = []
        v = C0 / np.sqrt(g.eps_r * g.mu_r)
        if g.is_1d:
            for face, (b, inner, cell) in {"zlo": (0, 1, 0), "zhi": (g.nz - 1, g.nz - 2, g.nz - 1)}.items():
                if self.config.boundary.get(face, "mur") == "mur":
                    vv, dz = v[0, 0, cell], g.dz[0, 0, cell]
                    faces.append((0, b, inner, (vv * dt - dz) / (vv * dt + dz)))
            return faces
        nx, ny, nz = g.shape
        for face in FACES:
            if self.config.boundary.get(face, "mur") != "mur":
                continue
            axis = "xyz".index(face[0])
            hi = face.endswith("hi")
            n = g.shape[axis]
            b, inner, cell = (n, n - 1, n - 1) if hi else (0, 1, 0)
            size = np.take(g.sizes(face[0]), cell, axis=axis)
            vel = np.take(v, cell, axis=axis)
            r = (vel * dt - size) / (vel * dt + size)
            r = np.pad(r, [(0, 1), (0, 1)], mode="edge")  # to node shape of the face plane
            for comp in range(3):
                if comp == axis:
                    continue
                sl_b = [slice(None)] * 3
                sl_i = [slice(None)] * 3
                sl_b[axis], sl_i[axis] = b, inner
                faces.append((comp, tuple(sl_b), tuple(sl_i), r))
        return faces

    def _mur_save(self):
        return [self.state.e[c][si].copy() for c, _, si, _ in self._mur]

    def _mur_apply(self, old_inner):
        e = self.state.e
        for (c, sb, si, r), oi in zip(self._mur, old_inner):
            e[c][sb] = oi + r * (e[c][si] - e[c][sb])

    def _pec_apply(self):
        if self.grid.is_1d:
            if self._pec1d is not None:
                self.state.e[0][self._pec1d] = 0.0
            return
        for comp, idx in enumerate(self._pec):
            if idx[0].size:
                self.state.e[comp][idx] = 0.0

    # stepping -----------------------------------------------------------
    def update_h(self):
        s = self.state
        if self.grid.is_1d:
            kernels.update_h_1d(s.e[0], s.h[0], self._ch)
        else:
            kernels.update_h_3d(*s.e, *s.h, *self._ch)

    def update_e(self):
        s = self.state
        old = self._mur_save()
        if self.grid.is_1d:
            kernels.update_e_1d(s.e[0], s.h[0], self._ce)
        else:
            kernels.update_e_3d(*s.e, *s.h, *self._ce)
        return old

    def finish_e(self, old_inner):
        self._pec_apply()
        self._mur_apply(old_inner)

    def step(self, e_sources=(), h_sources=()):
        """One full leapfrog cycle; sources are (component array, flat idx, values)."""
        self.update_h()
        for kind_comp, flat, vals in h_sources:
            self.state.h[kind_comp].reshape(-1)[flat] += vals
        old = self.update_e()
        for comp, flat, vals in e_sources:
            self.state.e[comp].reshape(-1)[flat] += vals
        self.finish_e(old)
        self.n += 1

    def step_back(self):
        """Exact inverse of a source-free :meth:`step` (PEC boundaries only)."""
        s = self.state
        neg_e = [-c for c in self._ce] if not self.grid.is_1d else -self._ce
        neg_h = [-c for c in self._ch] if not self.grid.is_1d else -self._ch
        if self.grid.is_1d:
            kernels.update_e_1d(s.e[0], s.h[0], neg_e)
            self._pec_apply()
            kernels.update_h_1d(s.e[0], s.h[0], neg_h)
        else:
            kernels.update_e_3d(*s.e, *s.h, *neg_e)
            self._pec_apply()
            kernels.update_h_3d(*s.e, *s.h, *neg_h)
        self.n -= 1

    def energy(self) -> float:
        """Electric plus magnetic energy, sum(eps E^2 + mu H^2) * volume / 2."""
        g = self.grid
        vol = g.dx * g.dy * g.dz
        if g.is_1d:
            v = vol[0, 0, :]
            we = EPS0 * self.coeffs.eps_edge[0] * self.state.e[0] ** 2 * v
            wh = MU0 * g.mu_r[0, 0, :] * self.state.h[0] ** 2 * v
            return 0.5 * float(we.sum() + wh.sum())
        vp = _pad_cells(vol)
        we = sum(float((EPS0 * self.coeffs.eps_edge[c] * self.state.e[c] ** 2 * vp).sum()) for c in range(3))
        wh = sum(float((MU0 * g.mu_r * self.state.h[c] ** 2 * vol).sum()) for c in range(3))
        return 0.5 * (we + wh)

    def check_finite(self):
        for a in self.state.e + self.state.h:
            if not np.isfinite(a).all():
                raise NumericalInstability(
                    f"non-finite field at step {self.n}; dt={self.config.dt:g} vs CFL limit {cfl_limit(self.grid):g}")


def node_shape(grid: YeeGrid, kind: str) -> tuple:
    if grid.is_1d:
        return (grid.nz,)
    return (grid.nx + 1, grid.ny + 1, grid.nz + 1) if kind == "E" else grid.shape


def run(grid: YeeGrid, config: SimulationConfig, sources: Sequence[SourceSpec] = (),
        probes: Sequence[ProbeSpec] = (), samplers: Sequence = (), coeffs: Coefficients | None = None,
        reference: bool = False) -> dict:
    """Time-step ``config.nsteps`` steps and return ``{probe name: record}``.

    ``samplers`` get ``sample_k(state, n)`` before the H update and
    ``sample_j(state, n)`` right after it (see ``eqsources``).
    Each call counts as one forward run (or one reference run).
    """
    (REFERENCE_COUNTER if reference else RUN_COUNTER).increment()
    sim = Simulation(grid, config, coeffs)
    nsteps = config.nsteps
    prepared_src = {"E": [], "H": []}
    for s in sources:
        if len(s.waveform) < nsteps:
            raise ValueError("source waveform shorter than nsteps")
        flat = _flat(node_shape(grid, s.kind), s.nodes)
        prepared_src[s.kind].append((s.comp, flat, s.weights, s.waveform))
    prepared_probes = []
    records = {}
    for p in probes:
        flat = _flat(node_shape(grid, p.kind), p.nodes)
        n_out = 1 if p.reduce == "sum" else len(p.nodes)
        records[p.name] = np.zeros((nsteps, n_out))
        prepared_probes.append((p, flat))
    e_probes = [(p, f) for p, f in prepared_probes if p.kind == "E"]
    h_probes = [(p, f) for p, f in prepared_probes if p.kind == "H"]
    state = sim.state
    for n in range(nsteps):
        for smp in samplers:
            smp.sample_k(state, n)
        sim.update_h()
        for comp, flat, w, wf in prepared_src["H"]:
            if wf[n] != 0.0:
                state.h[comp].reshape(-1)[flat] += w * wf[n]
        for p, flat in h_probes:
            vals = state.h[p.comp].reshape(-1)[flat]
            records[p.name][n] = vals.sum() if p.reduce == "sum" else vals
        for smp in samplers:
            smp.sample_j(state, n)
        old = sim.update_e()
        for comp, flat, w, wf in prepared_src["E"]:
            if wf[n] != 0.0:
                state.e[comp].reshape(-1)[flat] += w * wf[n]
        sim.finish_e(old)
        sim.n += 1
        for p, flat in e_probes:
            vals = state.e[p.comp].reshape(-1)[flat]
            records[p.name][n] = vals.sum() if p.reduce == "sum" else vals
        if (n + 1) % config.check_every == 0 or n == nsteps - 1:
            sim.check_finite()
    return {k: (v[:, 0] if v.shape[1] == 1 and _is_sum(probes, k) else v) for k, v in records.items()}


def _is_sum(probes, name) -> bool:
    return next(p for p in probes if p.name == name).reduce == "sum"
