"""Discretised simulation domain.

A :class:`YeeGrid` stores per-cell sizes and materials plus the PEC masks of
the three electric-field components. Cells are addressed by 1-based
``(i, j, k)`` triads or by the 1-based linear index returned by
:func:`linear_index`. Internally every per-cell array has shape
``(nx, ny, nz)`` and is indexed 0-based.

One-dimensional problems use ``nx = ny = 1``; the wave then travels along z
with the (Ex, Hy) field pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AXES = ("x", "y", "z")


def linear_index(i: int, j: int, k: int, nx: int, ny: int, nz: int | None = None) -> int:
    """Map a 1-based cell triad to its 1-based linear index."""
    if i < 1 or i > nx or j < 1 or j > ny or k < 1 or (nz is not None and k > nz):
        raise IndexError(f"cell ({i}, {j}, {k}) outside grid {nx}x{ny}x{nz}")
    return (k - 1) * nx * ny + (j - 1) * nx + i


def triad_index(p: int, nx: int, ny: int) -> tuple[int, int, int]:
    """Inverse of :func:`linear_index`."""
    if p < 1:
        raise IndexError(f"linear index {p} < 1")
    q = p - 1
    return q % nx + 1, (q // nx) % ny + 1, q // (nx * ny) + 1


@dataclass(frozen=True)
class CellSubset:
    """Sorted, unique 1-based linear cell indices and the quantity they perturb."""

    indices: tuple[int, ...]
    axis: str

    def __post_init__(self):
        idx = tuple(int(p) for p in self.indices)
        if list(idx) != sorted(set(idx)):
            raise ValueError("subset indices must be unique and sorted ascending")
        if any(p < 1 for p in idx):
            raise ValueError("subset indices are 1-based")
        if self.axis not in AXES + ("material",):
            raise ValueError(f"unknown subset axis {self.axis!r}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_indices(cls, indices, axis: str) -> "CellSubset":
        return cls(tuple(sorted(set(int(p) for p in indices))), axis)

    def __len__(self) -> int:
        return len(self.indices)

    def isdisjoint(self, other: "CellSubset") -> bool:
        return set(self.indices).isdisjoint(other.indices)


@dataclass(frozen=True, eq=False)
class YeeGrid:
    nx: int
    ny: int
    nz: int
    dx: np.ndarray
    dy: np.ndarray
    dz: np.ndarray
    eps_r: np.ndarray
    mu_r: np.ndarray
    # PEC masks on the electric-field components, shape (nx+1, ny+1, nz+1) each
    pec: tuple = field(default=None)

    def __post_init__(self):
        shape = (self.nx, self.ny, self.nz)
        if min(shape) < 1:
            raise ValueError("cell counts must be >= 1")
        for name in ("dx", "dy", "dz", "eps_r", "mu_r"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.ndim == 0:
                arr = np.full(shape, float(arr))
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(arr > 0):
                raise ValueError(f"{name} must be strictly positive")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        eshape = (self.nx + 1, self.ny + 1, self.nz + 1)
        if self.pec is None:
            masks = tuple(np.zeros(eshape, dtype=bool) for _ in range(3))
        else:
            masks = tuple(np.array(m, dtype=bool) for m in self.pec)
            if len(masks) != 3 or any(m.shape != eshape for m in masks):
                raise ValueError(f"pec must be three boolean arrays of shape {eshape}")
        for m in masks:
            m.setflags(write=False)
        object.__setattr__(self, "pec", masks)

    @classmethod
    def uniform(cls, nx, ny, nz, dx, dy, dz, eps_r=1.0, mu_r=1.0, pec=None) -> "YeeGrid":
        return cls(nx, ny, nz, dx, dy, dz, eps_r, mu_r, pec)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def ncells(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def is_1d(self) -> bool:
        return self.nx == 1 and self.ny == 1

    def sizes(self, axis: str) -> np.ndarray:
        return {"x": self.dx, "y": self.dy, "z": self.dz}[axis]

    def cell(self, p: int) -> tuple[int, int, int]:
        """0-based array position of 1-based linear index ``p``."""
        if p > self.ncells:
            raise IndexError(f"linear index {p} > {self.ncells}")
        i, j, k = triad_index(p, self.nx, self.ny)
        return i - 1, j - 1, k - 1

    def index(self, i: int, j: int, k: int) -> int:
        return linear_index(i, j, k, self.nx, self.ny, self.nz)

    def replace(self, **changes) -> "YeeGrid":
        kw = dict(nx=self.nx, ny=self.ny, nz=self.nz, dx=self.dx, dy=self.dy, dz=self.dz,
                  eps_r=self.eps_r, mu_r=self.mu_r, pec=self.pec)
        kw.update(changes)
        return YeeGrid(**kw)

    def same_as(self, other: "YeeGrid") -> bool:
        """Bit-exact equality of all arrays."""
        if self.shape != other.shape:
            return False
        pairs = [(getattr(self, n), getattr(other, n)) for n in ("dx", "dy", "dz", "eps_r", "mu_r")]
        pairs += list(zip(self.pec, other.pec))
        return all(np.array_equal(a, b) for a, b in pairs)


def perturb(grid: YeeGrid, subset: CellSubset, delta: float) -> YeeGrid:
    """Return a copy of ``grid`` with the subset's sizes (or eps_r) shifted by ``delta``."""
    if not subset.indices or delta == 0:
        return grid
    origin = getattr(grid, "_origin", None)
    if origin is not None and origin[1] == subset and origin[2] == -delta:
        # undoing the previous shift: hand back the parent arrays, bit-exact
        return origin[0]
    cells = tuple(np.array(c) for c in zip(*(grid.cell(p) for p in subset.indices)))
    name = "eps_r" if subset.axis == "material" else "d" + subset.axis
    arr = np.array(getattr(grid, name), dtype=float)
    new = arr[cells] + delta
    if np.any(new <= 0):
        what = "permittivity" if subset.axis == "material" else "cell size"
        raise ValueError(f"perturbation {delta:g} gives a non-positive {what}")
    arr[cells] = new
    out = grid.replace(**{name: arr})
    object.__setattr__(out, "_origin", (grid, subset, delta))
    return out
