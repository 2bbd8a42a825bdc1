"""Truncated Taylor polynomials in one perturbation variable.

A :class:`PolyValue` holds ``c[0..M]`` with ``v(x0 + d) = sum c[m] d^m + O(d^(M+1))``.
Coefficients may be scalars or whole arrays (leading axis is the order), so a
field array lifted to order M is a single PolyValue.
"""

from __future__ import annotations

import math

import numpy as np


def poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cauchy product truncated at the shorter order."""
    order = min(len(a), len(b)) - 1
    shape = np.broadcast_shapes(a.shape[1:], b.shape[1:])
    out = np.zeros((order + 1,) + shape, dtype=np.result_type(a, b))
    for m in range(order + 1):
        for k in range(m + 1):
            out[m] += a[k] * b[m - k]
    return out


def poly_reciprocal(a: np.ndarray) -> np.ndarray:
    if np.any(a[0] == 0):
        raise ZeroDivisionError("reciprocal of a PolyValue with zero constant term")
    out = np.zeros_like(a, dtype=np.result_type(a, float))
    inv0 = 1.0 / a[0]
    out[0] = inv0
    for m in range(1, len(a)):
        acc = np.zeros_like(out[0])
        for k in range(1, m + 1):
            acc += a[k] * out[m - k]
        out[m] = -inv0 * acc
    return out


class PolyValue:
    __slots__ = ("c",)

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 0:
            c = c.reshape(1)
        self.c = c

    @classmethod
    def constant(cls, value, order: int) -> "PolyValue":
        v = np.asarray(value, dtype=float)
        c = np.zeros((order + 1,) + v.shape)
        c[0] = v
        return cls(c)

    @classmethod
    def variable(cls, value, order: int, slope=1.0) -> "PolyValue":
        """``value + slope * d`` truncated at ``order``."""
        p = cls.constant(value, order)
        if order >= 1:
            p.c[1] = slope
        return p

    @property
    def order(self) -> int:
        return len(self.c) - 1

    def derivatives(self) -> np.ndarray:
        """m-th derivatives at d = 0, m = 0..M."""
        f = np.array([math.factorial(m) for m in range(len(self.c))], dtype=float)
        return self.c * f.reshape((-1,) + (1,) * (self.c.ndim - 1))

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, PolyValue):
            if other.order != self.order:
                raise ValueError("PolyValue orders differ")
            return other.c
        return PolyValue.constant(other, self.order).c

    def __add__(self, other):
        return PolyValue(self.c + self._coerce(other))

    __radd__ = __add__

    def __neg__(self):
        return PolyValue(-self.c)

    def __sub__(self, other):
        return PolyValue(self.c - self._coerce(other))

    def __rsub__(self, other):
        return PolyValue(self._coerce(other) - self.c)

    def __mul__(self, other):
        if isinstance(other, PolyValue):
            return PolyValue(poly_mul(self.c, self._coerce(other)))
        return PolyValue(self.c * np.asarray(other, dtype=float))

    __rmul__ = __mul__

    def reciprocal(self) -> "PolyValue":
        return PolyValue(poly_reciprocal(self.c))

    def __truediv__(self, other):
        if isinstance(other, PolyValue):
            return self * other.reciprocal()
        return PolyValue(self.c / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __repr__(self) -> str:
        return f"PolyValue({self.c.tolist()!r})"
