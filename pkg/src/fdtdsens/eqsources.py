"""Equivalent sources recorded alongside an ordinary forward run.

For a parameter xi the differentiated update equations read

    dh/dxi[n] = dh/dxi[n-1] - Ch (D de/dxi[n-1]) + K[n],   K[n] = -(dCh/dxi) D e[n-1]
    de/dxi[n] = de/dxi[n-1] + Ce (D' dh/dxi[n]) + J[n],    J[n] =  (dCe/dxi) D' h[n]

so J is sampled from the H values the E update consumes in step ``n`` and K
from the E values the H update consumes. The sampler stores the stencil's
field inputs each step; J and K follow by applying the stencil, which keeps
the raw inputs available for the higher-order recursion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .engine import node_shape
from .grid import YeeGrid, linear_index
from .params import Stencil

COMPONENT_NAMES = "xyz"


def _gather_plan(grid: YeeGrid, nodes, kind: str):
    """Per component: (positions in ``nodes``, flat indices into that component's array)."""
    shape = node_shape(grid, kind)
    plan = []
    for comp in range(1 if grid.is_1d else 3):
        pos = [i for i, (k, c, _) in enumerate(nodes) if k == kind and c == comp]
        if pos:
            idx = np.ravel_multi_index(tuple(np.array(v) for v in zip(*[nodes[i][2] for i in pos])), shape)
            plan.append((comp, np.array(pos), idx))
    return plan


def _gather(field, plan, out):
    for comp, pos, idx in plan:
        out[pos] = field[comp].reshape(-1)[idx]


def sample_equivalent_sources(state, stencils, which: str) -> dict:
    """J (``which='J'``) or K (``which='K'``) values of every stencil for the current step.

    Call with ``'K'`` before the H update and ``'J'`` right after it. Returns
    ``{parameter name: values at the stencil's E (J) or H (K) source nodes}``.
    """
    if which not in ("J", "K"):
        raise ValueError("which must be 'J' or 'K'")
    kind = "E" if which == "J" else "H"
    out = {}
    for st in stencils:
        x = np.array([state.field(k)[c][node] for k, c, node in st.obs_nodes], dtype=float)
        vals = st.assemble(1, x)
        rows = [i for i, (k, _, _) in enumerate(st.src_nodes) if k == kind]
        out[st.param.name] = vals[rows]
    return out


@dataclass
class EquivalentSourceRecord:
    """First-order sources of one parameter over a whole run.

    ``series[n, s]`` is J (E source node) or K (H source node) at step ``n``;
    ``inputs[n, o]`` the stencil input at obs node ``o`` consumed in step ``n``.
    """

    stencil: Stencil
    series: np.ndarray
    inputs: np.ndarray

    @property
    def name(self) -> str:
        return self.stencil.param.name

    @property
    def src_nodes(self):
        return self.stencil.src_nodes

    def first_arrival(self, rel: float = 1e-12) -> int | None:
        """First step where |J|+|K| summed over nodes exceeds ``rel`` times its peak."""
        mag = np.abs(self.series).sum(axis=1)
        if mag.size == 0 or mag.max() == 0:
            return None
        return int(np.argmax(mag > rel * mag.max()))


class EquivalentSourceSampler:
    """Hook for :func:`engine.run` that records stencil inputs of several parameters."""

    def __init__(self, grid: YeeGrid, stencils, nsteps: int):
        self.grid = grid
        self.stencils = list(stencils)
        self.nsteps = nsteps
        self._inputs = [np.zeros((nsteps, len(st.obs_nodes))) for st in self.stencils]
        self._plans = [(_gather_plan(grid, st.obs_nodes, "E"), _gather_plan(grid, st.obs_nodes, "H"))
                       for st in self.stencils]

    def sample_k(self, state, n: int):
        for buf, (eplan, _) in zip(self._inputs, self._plans):
            _gather(state.e, eplan, buf[n])

    def sample_j(self, state, n: int):
        for buf, (_, hplan) in zip(self._inputs, self._plans):
            _gather(state.h, hplan, buf[n])

    def records(self) -> dict:
        out = {}
        for st, buf in zip(self.stencils, self._inputs):
            series = st.assemble(1, buf.T).T if st.src_nodes else np.zeros((self.nsteps, 0))
            out[st.param.name] = EquivalentSourceRecord(st, series, buf)
        return out


def node_cell(grid: YeeGrid, stencil: Stencil, node) -> int:
    """1-based linear index of the subset cell a source node belongs to."""
    kind, comp, pos = node
    if grid.is_1d:
        return linear_index(1, 1, pos[0] + 1, 1, 1, grid.nz)
    cells = [grid.cell(p) for p in stencil.param.subset.indices]
    for c in cells:
        off = [pos[a] - c[a] for a in range(3)]
        if off == [0, 0, 0]:
            return grid.index(*(v + 1 for v in c))
    for c in cells:
        off = [pos[a] - c[a] for a in range(3)]
        if all(o in (0, 1) for o in off) and (kind == "H" or off[comp] == 0):
            return grid.index(*(v + 1 for v in c))
    raise ValueError(f"node {node} does not touch the subset of {stencil.param.name!r}")


def write_csv(path, grid: YeeGrid, records) -> None:
    """Columns: step, cell, component, value (component like ``Jx`` or ``Ky``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "cell", "component", "value"])
        for rec in records:
            labels = []
            for node in rec.src_nodes:
                kind, comp, _ = node
                letter = "J" if kind == "E" else "K"
                axis = "x" if grid.is_1d else COMPONENT_NAMES[comp]
                labels.append((node_cell(grid, rec.stencil, node), letter + axis))
            for n in range(rec.series.shape[0]):
                for (cell, comp), v in zip(labels, rec.series[n]):
                    w.writerow([n, cell, comp, repr(float(v))])
