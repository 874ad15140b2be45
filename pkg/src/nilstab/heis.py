"""Heisenberg group G and its Lie algebra in exponential-free coordinates.

A group element (y1, y2, y3) is the unipotent matrix

    [[1,  0,  0],
     [y1, 1,  0],
     [y3, y2, 1]]

and an algebra element (v1, v2, v3) is v1*E1 + v2*E2 + v3*E3 with
E1 = e21, E2 = e32, E3 = e31.  The group is 2-step nilpotent, so exp/log,
products and conjugation all have exact polynomial formulas.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class GroupElem(NamedTuple):
    y1: float
    y2: float
    y3: float

    def __mul__(self, other):
        return mul(self, other)

    def matrix(self) -> np.ndarray:
        return np.array([[1.0, 0.0, 0.0],
                         [self.y1, 1.0, 0.0],
                         [self.y3, self.y2, 1.0]])

    @classmethod
    def from_matrix(cls, m) -> "GroupElem":
        m = np.asarray(m, dtype=float)
        return cls(float(m[1, 0]), float(m[2, 1]), float(m[2, 0]))


class AlgebraVec(NamedTuple):
    v1: float
    v2: float
    v3: float

    def __add__(self, other):
        return AlgebraVec(self.v1 + other[0], self.v2 + other[1], self.v3 + other[2])

    def __sub__(self, other):
        return AlgebraVec(self.v1 - other[0], self.v2 - other[1], self.v3 - other[2])

    def __neg__(self):
        return AlgebraVec(-self.v1, -self.v2, -self.v3)

    def __mul__(self, s):
        return AlgebraVec(s * self.v1, s * self.v2, s * self.v3)

    __rmul__ = __mul__

    def matrix(self) -> np.ndarray:
        return np.array([[0.0, 0.0, 0.0],
                         [self.v1, 0.0, 0.0],
                         [self.v3, self.v2, 0.0]])

    @classmethod
    def from_matrix(cls, m) -> "AlgebraVec":
        m = np.asarray(m, dtype=float)
        return cls(float(m[1, 0]), float(m[2, 1]), float(m[2, 0]))


IDENTITY = GroupElem(0.0, 0.0, 0.0)
E1 = AlgebraVec(1.0, 0.0, 0.0)
E2 = AlgebraVec(0.0, 1.0, 0.0)
E3 = AlgebraVec(0.0, 0.0, 1.0)
ZERO = AlgebraVec(0.0, 0.0, 0.0)


def mul(g, h) -> GroupElem:
    return GroupElem(g[0] + h[0], g[1] + h[1], g[2] + h[2] + g[1] * h[0])


def inv(g) -> GroupElem:
    return GroupElem(-g[0], -g[1], -g[2] + g[0] * g[1])


def group_commutator(g, h) -> GroupElem:
    """Return g^-1 h^-1 g h.

    The order mirrors the pseudogroup convention [f2, f1] = f2^-1 f1^-1 f2 f1,
    so commutator(exp(E1), exp(E2)) = exp(-E3).
    """
    return mul(mul(mul(inv(g), inv(h)), g), h)


def alg_exp(v) -> GroupElem:
    return GroupElem(v[0], v[1], v[2] + 0.5 * v[0] * v[1])


def alg_log(g) -> AlgebraVec:
    return AlgebraVec(g[0], g[1], g[2] - 0.5 * g[0] * g[1])


def ab_group(g) -> tuple[float, float]:
    """Abelianization G -> R^2."""
    return (g[0], g[1])


def ab_algebra(v) -> tuple[float, float]:
    """Abelianization of the Lie algebra, (v1, v2)."""
    return (v[0], v[1])


def conjugate_alg(u, h) -> AlgebraVec:
    """h^-1 u h for an algebra element u; differs from u only along E3."""
    return AlgebraVec(u[0], u[1], u[2] - (u[0] * h[1] - u[1] * h[0]))


def lie_bracket(u, v) -> AlgebraVec:
    """Matrix commutator uv - vu; note [E1, E2] = -E3 at the matrix level."""
    return AlgebraVec(0.0, 0.0, u[1] * v[0] - u[0] * v[1])
