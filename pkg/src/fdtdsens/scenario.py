"""Scenario files: a small sectioned ``key = value`` format.

Grammar (one item per line, ``#`` starts a comment, blank lines ignored)::

    [scenario]            name
    [grid]                nx ny nz dx dy dz eps_r boundary xlo xhi ylo yhi zlo zhi
    [simulation]          dt nsteps dt_override gate_steps
    [excitation]          t0 ts amplitude
    [port]                component i j k
    [analysis]            f_lo f_hi nfreq
    [region NAME]         i j k eps_r mu_r role
    [sheet NAME]          i j k role          (PEC sheet on the z-plane at the top of cell k)
    [parameter NAME]      i j k axis nominal

Cell ranges are 1-based and inclusive: ``j = 40:45`` or ``k = 4``. ``boundary``
sets every face (``mur`` or ``pec``); per-face keys override it. ``role`` is
``structure`` (default) or ``feed``; feed regions and sheets also exist in the
reference structure used to measure the incident field. A port cell
``(i, j, k)`` drives the E edge of ``component`` that starts at the cell's
lowest corner.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .engine import FACES, SimulationConfig, cfl_limit, gaussian
from .grid import AXES, CellSubset, YeeGrid, linear_index
from .params import DesignParameter
from .spectral import frequency_grid

Range = tuple  # (lo, hi), 1-based inclusive


class ScenarioError(ValueError):
    """All validation problems of one scenario text."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class Region:
    name: str
    i: Range
    j: Range
    k: Range
    eps_r: float = 1.0
    mu_r: float = 1.0
    role: str = "structure"


@dataclass(frozen=True)
class Sheet:
    name: str
    i: Range
    j: Range
    k: int
    role: str = "structure"


@dataclass(frozen=True)
class Port:
    component: str
    i: Range
    j: Range
    k: Range


@dataclass(frozen=True)
class ParamSpec:
    name: str
    i: Range
    j: Range
    k: Range
    axis: str
    nominal: float = 0.0


@dataclass(frozen=True)
class Scenario:
    name: str
    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    dt: float
    nsteps: int
    t0: float
    ts: float
    port: Port
    eps_r: float = 1.0
    boundary: tuple = tuple((f, "mur") for f in FACES)
    amplitude: float = 1.0
    dt_override: bool = False
    gate_steps: int = 0
    regions: tuple = ()
    sheets: tuple = ()
    params: tuple = ()
    f_lo: float = 1e9
    f_hi: float = 10e9
    nfreq: int = 401

    # derived objects -------------------------------------------------------
    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    @cached_property
    def grid(self) -> YeeGrid:
        return self._build_grid(reference=False)

    @cached_property
    def reference_grid(self) -> YeeGrid:
        return self._build_grid(reference=True)

    def _build_grid(self, reference: bool) -> YeeGrid:
        eps = np.full((self.nx, self.ny, self.nz), float(self.eps_r))
        mu = np.ones_like(eps)
        for r in self.regions:
            if reference and r.role != "feed":
                continue
            sl = _cell_slices(r)
            eps[sl] = r.eps_r
            mu[sl] = r.mu_r
        shape = (self.nx + 1, self.ny + 1, self.nz + 1)
        pec = [np.zeros(shape, dtype=bool) for _ in range(3)]
        if not self.is_1d:
            for s in self.sheets:
                if reference and s.role != "feed":
                    continue
                (i0, i1), (j0, j1) = s.i, s.j
                pec[0][i0 - 1:i1, j0 - 1:j1 + 1, s.k] = True
                pec[1][i0 - 1:i1 + 1, j0 - 1:j1, s.k] = True
        return YeeGrid(self.nx, self.ny, self.nz, self.dx, self.dy, self.dz, eps, mu, tuple(pec))

    @property
    def is_1d(self) -> bool:
        return self.nx == 1 and self.ny == 1

    @property
    def config(self) -> SimulationConfig:
        return SimulationConfig(self.dt, self.nsteps, dict(self.boundary))

    @property
    def gate(self) -> int:
        return self.gate_steps or self.nsteps

    def waveform(self, nsteps: int | None = None) -> np.ndarray:
        n = self.nsteps if nsteps is None else nsteps
        return self.amplitude * gaussian(np.arange(n) * self.dt, self.t0, self.ts)

    @property
    def freqs(self) -> np.ndarray:
        return frequency_grid(self.f_lo, self.f_hi, self.nfreq)

    @property
    def port_comp(self) -> int:
        return 0 if self.is_1d else AXES.index(self.port.component)

    @property
    def port_nodes(self) -> list:
        if self.is_1d:
            return [(k - 1,) for k in _span(self.port.k)]
        return [(i - 1, j - 1, k - 1) for i in _span(self.port.i) for j in _span(self.port.j) for k in _span(self.port.k)]

    def parameter(self, name: str) -> DesignParameter:
        for p in self.params:
            if p.name == name:
                idx = sorted({linear_index(i, j, k, self.nx, self.ny, self.nz)
                              for i in _span(p.i) for j in _span(p.j) for k in _span(p.k)})
                return DesignParameter(p.name, CellSubset(tuple(idx), p.axis), p.nominal)
        raise KeyError(f"unknown parameter {name!r}; scenario has {[p.name for p in self.params]}")

    def parameters(self, names=None) -> list:
        names = [p.name for p in self.params] if names is None else list(names)
        return [self.parameter(n) for n in names]

    def default_step(self, name: str) -> float:
        """CFD step: 0.1 of the affected cell size, or 0.01 of eps_r."""
        p = self.parameter(name)
        cell = self.grid.cell(p.subset.indices[0])
        if p.kind == "material":
            return 0.01 * float(self.grid.eps_r[cell])
        return 0.1 * float(self.grid.sizes(p.subset.axis)[cell])

    def to_text(self) -> str:
        return serialize(self)


def _span(r: Range) -> range:
    return range(r[0], r[1] + 1)


def _cell_slices(r) -> tuple:
    return tuple(slice(lo - 1, hi) for lo, hi in (r.i, r.j, r.k))


# -- parsing --------------------------------------------------------------------

_SCALAR_KEYS = {
    "scenario": {"name": str},
    "grid": {"nx": int, "ny": int, "nz": int, "dx": float, "dy": float, "dz": float, "eps_r": float,
             "boundary": str, **{f: str for f in FACES}},
    "simulation": {"dt": float, "nsteps": int, "dt_override": bool, "gate_steps": int},
    "excitation": {"t0": float, "ts": float, "amplitude": float},
    "port": {"component": str, "i": Range, "j": Range, "k": Range},
    "analysis": {"f_lo": float, "f_hi": float, "nfreq": int},
}
_NAMED_KEYS = {
    "region": {"i": Range, "j": Range, "k": Range, "eps_r": float, "mu_r": float, "role": str},
    "sheet": {"i": Range, "j": Range, "k": int, "role": str},
    "parameter": {"i": Range, "j": Range, "k": Range, "axis": str, "nominal": float},
}
_REQUIRED = {
    "grid": ("nx", "ny", "nz", "dx", "dy", "dz"),
    "simulation": ("dt", "nsteps"),
    "excitation": ("t0", "ts"),
    "port": ("k",),
    "region": ("i", "j", "k"),
    "sheet": ("i", "j", "k"),
    "parameter": ("i", "j", "k", "axis"),
}


def _convert(kind, text: str):
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is bool:
        low = text.lower()
        if low not in ("true", "false"):
            raise ValueError(f"expected true/false, got {text!r}")
        return low == "true"
    if kind is Range:
        parts = text.split(":")
        if len(parts) == 1:
            v = int(parts[0])
            return (v, v)
        if len(parts) != 2:
            raise ValueError(f"bad range {text!r}")
        lo, hi = int(parts[0]), int(parts[1])
        if hi < lo:
            raise ValueError(f"empty range {text!r}")
        return (lo, hi)
    return text


def parse_scenario(text: str) -> Scenario:
    """Parse and validate; raises :class:`ScenarioError` listing every problem."""
    errors: list[str] = []
    sections: dict = {}
    named: dict = {"region": {}, "sheet": {}, "parameter": {}}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                errors.append(f"line {lineno}: malformed section header {raw.strip()!r}")
                current = None
                continue
            head = line[1:-1].split()
            if len(head) == 1 and head[0] in _SCALAR_KEYS:
                if head[0] in sections:
                    errors.append(f"line {lineno}: duplicate section [{head[0]}]")
                current = sections.setdefault(head[0], {}), _SCALAR_KEYS[head[0]], head[0]
            elif len(head) == 2 and head[0] in _NAMED_KEYS:
                if head[1] in named[head[0]]:
                    errors.append(f"line {lineno}: duplicate [{head[0]} {head[1]}]")
                current = named[head[0]].setdefault(head[1], {}), _NAMED_KEYS[head[0]], head[0]
            else:
                errors.append(f"line {lineno}: unknown section [{' '.join(head)}]")
                current = None
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        if current is None:
            errors.append(f"line {lineno}: key outside a known section")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        store, schema, sect = current
        if key not in schema:
            errors.append(f"line {lineno}: unknown key {key!r} in [{sect}]")
            continue
        try:
            store[key] = _convert(schema[key], value)
        except ValueError as exc:
            errors.append(f"line {lineno}: {key}: {exc}")

    for sect in ("grid", "simulation", "excitation", "port"):
        if sect not in sections:
            errors.append(f"missing section [{sect}]")
    for sect, req in _REQUIRED.items():
        if sect in named:
            for nm, vals in named[sect].items():
                errors += [f"[{sect} {nm}]: missing {k!r}" for k in req if k not in vals]
        elif sect in sections:
            errors += [f"[{sect}]: missing {k!r}" for k in req if k not in sections[sect]]
    if any("missing" in e for e in errors):
        raise ScenarioError(errors)

    g, sim, exc = sections["grid"], sections["simulation"], sections["excitation"]
    boundary = {f: g.get("boundary", "mur") for f in FACES}
    boundary.update({f: g[f] for f in FACES if f in g})
    one_d = g["nx"] == 1 and g["ny"] == 1
    port = sections["port"]
    scen = Scenario(
        name=sections.get("scenario", {}).get("name", "custom"),
        nx=g["nx"], ny=g["ny"], nz=g["nz"], dx=g["dx"], dy=g["dy"], dz=g["dz"],
        eps_r=g.get("eps_r", 1.0),
        boundary=tuple((f, boundary[f]) for f in FACES),
        dt=sim["dt"], nsteps=sim["nsteps"], dt_override=sim.get("dt_override", False),
        gate_steps=sim.get("gate_steps", 0),
        t0=exc["t0"], ts=exc["ts"], amplitude=exc.get("amplitude", 1.0),
        port=Port(port.get("component", "x" if one_d else "z"), port.get("i", (1, 1)), port.get("j", (1, 1)), port["k"]),
        regions=tuple(Region(n, v["i"], v["j"], v["k"], v.get("eps_r", 1.0), v.get("mu_r", 1.0), v.get("role", "structure"))
                      for n, v in named["region"].items()),
        sheets=tuple(Sheet(n, v["i"], v["j"], v["k"], v.get("role", "structure")) for n, v in named["sheet"].items()),
        params=tuple(ParamSpec(n, v["i"], v["j"], v["k"], v["axis"], v.get("nominal", 0.0))
                     for n, v in named["parameter"].items()),
        f_lo=sections.get("analysis", {}).get("f_lo", 1e9),
        f_hi=sections.get("analysis", {}).get("f_hi", 10e9),
        nfreq=sections.get("analysis", {}).get("nfreq", 401),
    )
    errors += validate(scen)
    if errors:
        raise ScenarioError(errors)
    return scen


def validate(s: Scenario) -> list[str]:
    errors = []
    for key in ("nx", "ny", "nz", "nsteps", "nfreq"):
        if getattr(s, key) < 1:
            errors.append(f"{key} must be >= 1")
    for key in ("dx", "dy", "dz", "dt", "ts"):
        if not getattr(s, key) > 0:
            errors.append(f"{key} must be positive")
    if errors:
        return errors
    if s.eps_r <= 0:
        errors.append("eps_r must be positive")
    for face, kind in s.boundary:
        if kind not in ("mur", "pec"):
            errors.append(f"boundary {face} = {kind!r}: expected mur or pec")
    if not s.dt_override:
        limit = cfl_limit(YeeGrid.uniform(s.nx, s.ny, s.nz, s.dx, s.dy, s.dz))
        if s.dt > limit:
            errors.append(f"dt = {s.dt:g} s exceeds the CFL limit {limit:g} s (set dt_override = true to force)")
    if not 0 < s.f_lo < s.f_hi < 0.5 / s.dt:
        errors.append(f"analysis band must satisfy 0 < f_lo < f_hi < {0.5 / s.dt:g} Hz")
    if s.gate_steps < 0:
        errors.append("gate_steps must be >= 0")
    dims = {"i": s.nx, "j": s.ny, "k": s.nz}

    def check_box(label, obj, axes=("i", "j", "k")):
        for a in axes:
            lo, hi = getattr(obj, a)
            if lo < 1 or hi > dims[a]:
                errors.append(f"{label}: {a} = {lo}:{hi} outside 1:{dims[a]}")

    check_box("[port]", s.port)
    if s.port.component not in AXES:
        errors.append(f"[port]: component {s.port.component!r} not in x/y/z")
    elif s.is_1d and s.port.component != "x":
        errors.append("[port]: 1-D scenarios drive component x")
    for r in s.regions:
        check_box(f"[region {r.name}]", r)
        if r.eps_r <= 0 or r.mu_r <= 0:
            errors.append(f"[region {r.name}]: material values must be positive")
        if r.role not in ("structure", "feed"):
            errors.append(f"[region {r.name}]: role {r.role!r}")
    for sh in s.sheets:
        check_box(f"[sheet {sh.name}]", sh, ("i", "j"))
        if not 0 <= sh.k <= s.nz:
            errors.append(f"[sheet {sh.name}]: k = {sh.k} outside 0:{s.nz}")
        if sh.role not in ("structure", "feed"):
            errors.append(f"[sheet {sh.name}]: role {sh.role!r}")
        if s.is_1d:
            errors.append(f"[sheet {sh.name}]: sheets need a 3-D grid")
    for p in s.params:
        check_box(f"[parameter {p.name}]", p)
        if p.axis not in AXES + ("material",):
            errors.append(f"[parameter {p.name}]: axis {p.axis!r} not in x/y/z/material")
        elif s.is_1d and p.axis in ("x", "y"):
            errors.append(f"[parameter {p.name}]: 1-D scenarios only vary z or material")
    if s.t0 < 0:
        errors.append("t0 must be >= 0")
    return errors


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return str(v[0]) if v[0] == v[1] else f"{v[0]}:{v[1]}"
    return str(v)


def serialize(s: Scenario) -> str:
    out = [f"[scenario]\nname = {s.name}\n"]
    out.append("[grid]")
    for k in ("nx", "ny", "nz", "dx", "dy", "dz", "eps_r"):
        out.append(f"{k} = {_fmt(getattr(s, k))}")
    out += [f"{face} = {kind}" for face, kind in s.boundary]
    out.append("\n[simulation]")
    for k in ("dt", "nsteps", "dt_override", "gate_steps"):
        out.append(f"{k} = {_fmt(getattr(s, k))}")
    out.append("\n[excitation]")
    for k in ("t0", "ts", "amplitude"):
        out.append(f"{k} = {_fmt(getattr(s, k))}")
    out.append("\n[port]")
    for k in ("component", "i", "j", "k"):
        out.append(f"{k} = {_fmt(getattr(s.port, k))}")
    out.append("\n[analysis]")
    for k in ("f_lo", "f_hi", "nfreq"):
        out.append(f"{k} = {_fmt(getattr(s, k))}")
    for sect, items in (("region", s.regions), ("sheet", s.sheets), ("parameter", s.params)):
        for it in items:
            out.append(f"\n[{sect} {it.name}]")
            for f in dataclasses.fields(it):
                if f.name != "name":
                    out.append(f"{f.name} = {_fmt(getattr(it, f.name))}")
    return "\n".join(out) + "\n"


# -- built-ins --------------------------------------------------------------------

MULTILAYER = """\
# Three dielectric slabs on a 1-D line; port near the left end.
[scenario]
name = multilayer

[grid]
nx = 1
ny = 1
nz = 1030
dx = 0.000424
dy = 0.000424
dz = 0.000424
boundary = mur

[simulation]
dt = 4.41e-13
# 4096 steps do not cover the round trip to the third slab; see README.
nsteps = 20480

[excitation]
t0 = 1.2e-10
ts = 2e-11

[port]
component = x
k = 10

[analysis]
f_lo = 1e9
f_hi = 25e9
nfreq = 401

[region slab1]
i = 1
j = 1
k = 402:414
eps_r = 2.2

[region slab2]
i = 1
j = 1
k = 509:531
eps_r = 3.0

[region slab3]
i = 1
j = 1
k = 626:658
eps_r = 4.0

[parameter d1]
i = 1
j = 1
k = 414
axis = z
nominal = 0.0051

[parameter d2]
i = 1
j = 1
k = 531
axis = z
nominal = 0.0093

[parameter d3]
i = 1
j = 1
k = 658
axis = z
nominal = 0.0136

[parameter eps1]
i = 1
j = 1
k = 402:414
axis = material
nominal = 2.2

[parameter eps2]
i = 1
j = 1
k = 509:531
axis = material
nominal = 3.0

[parameter eps3]
i = 1
j = 1
k = 626:658
axis = material
nominal = 4.0
"""


def _microstrip_text(name, nx, ny, nz, dx, dy, line_i, stub_i, widths, port_j, nsteps):
    stubs = "".join(
        f"\n[sheet stub{n}]\ni = {stub_i[0]}:{stub_i[1]}\nj = {w[0]}:{w[1]}\nk = 3\n" for n, w in enumerate(widths, 1))
    params = "".join(
        f"\n[parameter s{n}]\ni = {stub_i[1]}\nj = {w[0]}:{w[1]}\nk = 4\naxis = y\nnominal = 0.0122\n"
        for n, w in enumerate(widths, 1))
    return f"""\
# Microstrip line with three open stubs on a grounded 0.795 mm substrate.
[scenario]
name = {name}

[grid]
nx = {nx}
ny = {ny}
nz = {nz}
dx = {dx}
dy = {dy}
dz = 0.000265
boundary = mur
zlo = pec

[simulation]
dt = 4.41e-13
nsteps = {nsteps}

[excitation]
t0 = 4.5e-11
ts = 1.5e-11

[port]
component = z
i = {line_i[0]}:{line_i[1]}
j = {port_j}
k = 1:3

[analysis]
f_lo = 1e9
f_hi = 15e9
nfreq = 401

[region substrate]
i = 1:{nx}
j = 1:{ny}
k = 1:3
eps_r = 2.2
role = feed

[sheet line]
i = {line_i[0]}:{line_i[1]}
j = 1:{ny}
k = 3
role = feed
{stubs}{params}"""


MICROSTRIP = _microstrip_text("microstrip", 80, 150, 16, 0.0004064, 0.0004233, (31, 36), (37, 67),
                              ((40, 45), (85, 90), (120, 125)), 10, 4000)
MICROSTRIP_DESK = _microstrip_text("microstrip-desk", 40, 75, 10, 0.0008128, 0.0008466, (16, 18), (19, 34),
                                   ((20, 22), (43, 45), (60, 62)), 5, 24000)

BUILTINS = {"multilayer": MULTILAYER, "microstrip": MICROSTRIP, "microstrip-desk": MICROSTRIP_DESK}


def load_scenario(name_or_path: str) -> Scenario:
    if name_or_path in BUILTINS:
        return parse_scenario(BUILTINS[name_or_path])
    path = Path(name_or_path)
    if not path.exists():
        raise ScenarioError([f"no built-in or file named {name_or_path!r} (built-ins: {', '.join(BUILTINS)})"])
    return parse_scenario(path.read_text(encoding="utf-8"))
