"""Design parameters and the analytic derivatives of the update coefficients.

A geometric parameter adds ``delta`` to one cell size of every cell in its
subset, so each coefficient ``K / size`` it touches becomes ``K / (size + delta)``.
A material parameter adds ``delta`` to eps_r of its subset cells; an E
coefficient ``K / eps_eff`` then becomes ``K / (eps_eff + w * delta)`` where
``w`` is the fraction of the edge-averaged cells inside the subset (1 in 1-D).
Both are instances of ``K / (s + w * delta)``, whose m-th derivative is
``K * (-1)^m * m! * w^m * s^-(m+1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import EPS0, MU0
from .engine import E_TERMS, H_TERMS, Coefficients, _pad_cells, edge_average
from .grid import AXES, CellSubset, YeeGrid

E_TERMS_1D = {0: ((2, -1, 0),)}  # Ex[k] -= c (Hy[k] - Hy[k-1])
H_TERMS_1D = {0: ((2, -1, 0),)}  # Hy[k] -= c (Ex[k+1] - Ex[k])


@dataclass(frozen=True)
class DesignParameter:
    name: str
    subset: CellSubset
    nominal: float = 0.0

    @property
    def kind(self) -> str:
        return "material" if self.subset.axis == "material" else "geometric"


def size_reciprocal_derivative(delta: float, m: int) -> float:
    """m-th derivative of 1/(delta + x) with respect to x, at x = 0."""
    if m < 1:
        raise ValueError("order must be >= 1")
    if delta <= 0:
        raise ValueError("cell size must be positive")
    return (-1) ** m * math.factorial(m) * delta ** -(m + 1)


def check_disjoint(params) -> None:
    params = list(params)
    for a in range(len(params)):
        for b in range(a + 1, len(params)):
            if not params[a].subset.isdisjoint(params[b].subset):
                raise ValueError(f"parameters {params[a].name!r} and {params[b].name!r} have overlapping subsets")


@dataclass(frozen=True)
class AffectedCoefficient:
    """One update coefficient ``K / (s + w * delta)`` that depends on a parameter."""

    kind: str  # "E" or "H"
    comp: int
    axis: int  # derivative axis of the curl term it multiplies
    node: tuple  # 0-based array position
    scale: float  # K
    base: float  # s
    weight: float  # w

    @property
    def value(self) -> float:
        return self.scale / self.base

    def derivative(self, m: int) -> float:
        if m < 1:
            raise ValueError("order must be >= 1")
        return self.scale * (-1) ** m * math.factorial(m) * self.weight**m * self.base ** -(m + 1)

    def taylor(self, order: int) -> np.ndarray:
        """Taylor coefficients c_0..c_order of the coefficient in delta."""
        r = -self.weight / self.base
        return self.value * r ** np.arange(order + 1)


def _is_active(grid: YeeGrid, kind: str, comp: int, node: tuple) -> bool:
    """Whether the component at ``node`` is advanced by the curl update (and not PEC)."""
    if grid.is_1d:
        (k,) = node
        if kind == "H":
            return k < grid.nz - 1
        return 0 < k < grid.nz - 1 and not grid.pec[0][0, 0, k]
    if kind == "H":
        return True
    n = grid.shape
    if node[comp] >= n[comp]:
        return False
    for a in range(3):
        if a != comp and not 0 < node[a] < n[a]:
            return False
    return not grid.pec[comp][node]


def affected_coefficients(grid: YeeGrid, coeffs: Coefficients, param: DesignParameter) -> list[AffectedCoefficient]:
    """Every active coefficient that varies with ``param``, in a fixed order."""
    out = []
    subset = param.subset
    if not subset.indices:
        return out
    cells = [grid.cell(p) for p in subset.indices]
    dt = coeffs.dt
    if grid.is_1d:
        for (_, _, k) in cells:
            eps, mu = grid.eps_r[0, 0, k], grid.mu_r[0, 0, k]
            dz = grid.dz[0, 0, k]
            if param.kind == "geometric":
                if subset.axis != "z":
                    continue
                if _is_active(grid, "E", 0, (k,)):
                    out.append(AffectedCoefficient("E", 0, 2, (k,), dt / (EPS0 * eps), dz, 1.0))
                if _is_active(grid, "H", 0, (k,)):
                    out.append(AffectedCoefficient("H", 0, 2, (k,), dt / (MU0 * mu), dz, 1.0))
            elif _is_active(grid, "E", 0, (k,)):
                out.append(AffectedCoefficient("E", 0, 2, (k,), dt / (EPS0 * dz), eps, 1.0))
        return out

    if param.kind == "geometric":
        d = AXES.index(subset.axis)
        for cell in cells:
            for c, terms in E_TERMS.items():
                if any(t[0] == d for t in terms) and _is_active(grid, "E", c, cell):
                    eps = coeffs.eps_edge[c][cell]
                    out.append(AffectedCoefficient("E", c, d, cell, dt / (EPS0 * eps), grid.sizes(subset.axis)[cell], 1.0))
            for c, terms in H_TERMS.items():
                if any(t[0] == d for t in terms):
                    mu = grid.mu_r[cell]
                    out.append(AffectedCoefficient("H", c, d, cell, dt / (MU0 * mu), grid.sizes(subset.axis)[cell], 1.0))
        return out

    indicator = np.zeros(grid.shape)
    for cell in cells:
        indicator[cell] = 1.0
    sizes = {a: _pad_cells(grid.sizes(AXES[a])) for a in range(3)}
    for c, terms in E_TERMS.items():
        w = edge_average(grid, indicator, c, fill=0.0)
        for node in zip(*np.nonzero(w > 0)):
            node = tuple(int(v) for v in node)
            if not _is_active(grid, "E", c, node):
                continue
            eps = coeffs.eps_edge[c][node]
            for d, _, _ in terms:
                out.append(AffectedCoefficient("E", c, d, node, dt / (EPS0 * sizes[d][node]), eps, float(w[node])))
    return out


def coeff_derivative(grid: YeeGrid, coeffs: Coefficients, param: DesignParameter, cell: int, m: int,
                     kind: str = "E", comp: int | None = None, axis: int | None = None) -> float:
    """m-th derivative of one update coefficient at 1-based cell ``cell``.

    The coefficient is the ``kind`` component ``comp`` term along ``axis``;
    defaults pick the component the parameter perturbs (Ex/z in 1-D).
    Returns exactly 0 for cells outside the subset or untouched coefficients.
    """
    if m < 1:
        raise ValueError("order must be >= 1")
    node = grid.cell(cell)
    if grid.is_1d:
        node, comp, axis = (node[2],), 0, 2
    for ac in affected_coefficients(grid, coeffs, param):
        if ac.kind == kind and ac.node == node and (comp is None or ac.comp == comp) and (axis is None or ac.axis == axis):
            return ac.derivative(m)
    return 0.0


def mixed_coeff_derivative(param_u: DesignParameter, param_v: DesignParameter, cell: int | None = None) -> float:
    """Cross derivative of any coefficient w.r.t. two parameters: always zero."""
    if param_u.name == param_v.name:
        raise ValueError("same parameter twice: use coeff_derivative with m=2")
    if not param_u.subset.isdisjoint(param_v.subset):
        raise ValueError(f"subsets of {param_u.name!r} and {param_v.name!r} overlap")
    return 0.0


# -- equivalent-source stencils ------------------------------------------------

@dataclass
class Stencil:
    """Differentiated update stencil of one parameter.

    ``src_nodes`` are the (kind, comp, node) entries that receive an
    equivalent source; ``obs_nodes`` the field entries the sources read.
    Term t adds ``sign[t] * dcoef(coef[t]) * (X[plus[t]] - X[minus[t]])`` to
    source ``src[t]``, where X holds obs-node values as consumed by the
    update: H at the same step for E sources, E one step earlier for H sources.
    """

    param: DesignParameter
    coefs: list
    src_nodes: list
    obs_nodes: list
    src: np.ndarray
    coef: np.ndarray
    sign: np.ndarray
    plus: np.ndarray
    minus: np.ndarray
    obs_lag: np.ndarray = field(default=None)  # 1 for E obs nodes (read one step late)

    def coef_derivatives(self, m: int) -> np.ndarray:
        return np.array([c.derivative(m) for c in self.coefs])

    def assemble(self, order: int, obs_values: np.ndarray) -> np.ndarray:
        """Sum of terms with the coefficients' ``order``-th derivative.

        ``obs_values`` has shape (n_obs, ...) and the result (n_src, ...).
        """
        dc = self.coef_derivatives(order)[self.coef] * self.sign
        diff = obs_values[self.plus] - obs_values[self.minus]
        out = np.zeros((len(self.src_nodes),) + obs_values.shape[1:], dtype=np.result_type(obs_values, float))
        np.add.at(out, self.src, dc.reshape((-1,) + (1,) * (diff.ndim - 1)) * diff)
        return out


def build_stencil(grid: YeeGrid, coeffs: Coefficients, param: DesignParameter) -> Stencil:
    coefs = affected_coefficients(grid, coeffs, param)
    src_index: dict = {}
    obs_index: dict = {}
    src, cf, sg, pl, mi = [], [], [], [], []

    def obs(node):
        return obs_index.setdefault(node, len(obs_index))

    def pec(kind, comp, node):
        if kind != "E":
            return False
        if grid.is_1d:
            return bool(grid.pec[0][0, 0, node[0]])
        return bool(grid.pec[comp][node])

    for ci, ac in enumerate(coefs):
        key = (ac.kind, ac.comp, ac.node)
        if grid.is_1d:
            terms = (E_TERMS_1D if ac.kind == "E" else H_TERMS_1D)[ac.comp]
        else:
            terms = (E_TERMS if ac.kind == "E" else H_TERMS)[ac.comp]
        for d, sign, other in terms:
            if d != ac.axis:
                continue
            step = [0, 0, 0] if not grid.is_1d else [0]
            step[d if not grid.is_1d else 0] = 1
            node = np.array(ac.node)
            if ac.kind == "E":  # backward difference of H
                a, b = tuple(node), tuple(node - step)
                okind = "H"
            else:  # forward difference of E
                a, b = tuple(node + step), tuple(node)
                okind = "E"
            a = tuple(int(v) for v in a)
            b = tuple(int(v) for v in b)
            if pec(okind, other, a) and pec(okind, other, b):
                continue  # both inputs are held at zero
            si = src_index.setdefault(key, len(src_index))
            src.append(si)
            cf.append(ci)
            sg.append(sign)
            pl.append(obs((okind, other, a)))
            mi.append(obs((okind, other, b)))
    obs_nodes = list(obs_index)
    return Stencil(
        param=param,
        coefs=coefs,
        src_nodes=list(src_index),
        obs_nodes=obs_nodes,
        src=np.array(src, dtype=int),
        coef=np.array(cf, dtype=int),
        sign=np.array(sg, dtype=float),
        plus=np.array(pl, dtype=int),
        minus=np.array(mi, dtype=int),
        obs_lag=np.array([1 if n[0] == "E" else 0 for n in obs_nodes], dtype=int),
    )
