"""The nilmanifold G/H, H the integer Heisenberg lattice, and the strip M = G/H x (-eps, eps).

Points are stored by their canonical representative in the unit cube [0, 1)^3.
Two coordinate triples describe the same coset iff they differ by the right
action of an integer element (m, n, k):

    (y1, y2, y3) ~ (y1 + m, y2 + n, y3 + y2*m + k)
"""

from __future__ import annotations

import itertools
from typing import NamedTuple

import numpy as np

from .heis import GroupElem, mul

DEFAULT_EPS = 1.0

_SHIFTS = np.array(list(itertools.product((-1, 0, 1), repeat=2)), dtype=float)


class NilPoint(NamedTuple):
    y1: float
    y2: float
    y3: float


class MPoint(NamedTuple):
    base: NilPoint
    z: float


def _frac(x):
    # x mod 1 in [0, 1); np.mod can round tiny negatives up to exactly 1.0
    r = np.mod(x, 1.0)
    return np.where(r >= 1.0, 0.0, r)


def canonicalize_array(y) -> np.ndarray:
    """Vectorized canonicalize on an array of shape (..., 3)."""
    y = np.asarray(y, dtype=float)
    y1, y2, y3 = y[..., 0], y[..., 1], y[..., 2]
    m = -np.floor(y1)
    # y1 + m can round up to exactly 1.0; that is one more lattice step
    m = np.where(y1 + m >= 1.0, m - 1.0, m)
    y1 = y1 + m
    y3 = y3 + y2 * m
    y2 = y2 - np.floor(y2)
    return np.stack([_frac(y1), _frac(y2), _frac(y3)], axis=-1)


def canonicalize(g) -> NilPoint:
    """Canonical representative in [0, 1)^3 of the coset gH.

    y1 is reduced first since the y3 correction depends on y2 times the y1
    shift; y2 and y3 are then reduced independently.
    """
    c = canonicalize_array(np.asarray(g[:3], dtype=float))
    return NilPoint(float(c[0]), float(c[1]), float(c[2]))


def right_translate(y, h):
    """Right action of h = (m, n, k) on coordinates: y * h."""
    return mul(y, h)


def quotient_dist(p, q) -> float:
    """Euclidean distance between cosets, minimized over nearby lattice translates.

    The translates use m, n in {-1, 0, 1} and, for each of those, the integer
    k that best matches y3 (after the shear, the best k can lie outside
    {-1, 0, 1}).  Not an intrinsic metric on G/H: the gluing shear makes
    right translation non-isometric, so the minimum is also symmetrized over
    translating either point.  Good enough for tolerance checks.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return float(min(_one_sided(p, q), _one_sided(q, p)))


def _one_sided(p, q):
    m, n = _SHIFTS[:, 0], _SHIFTS[:, 1]
    y3 = q[2] + q[1] * m
    k = np.round(p[2] - y3)
    shifted = np.stack([q[0] + m, q[1] + n, y3 + k], axis=-1)
    return np.sqrt(np.min(np.sum((shifted - p) ** 2, axis=-1)))


def same_point(p, q, tol: float) -> bool:
    if tol <= 0:
        raise ValueError("tol must be positive")
    return quotient_dist(p, q) < tol


def left_translate(g, p) -> NilPoint:
    return canonicalize(mul(g, GroupElem(*p)))


def lift(p) -> GroupElem:
    return GroupElem(float(p[0]), float(p[1]), float(p[2]))


def haar_sample(rng_seed=None, size=None):
    """Uniform (Haar) samples on G/H via the fundamental cube.

    ``rng_seed`` may be an int, None, or an existing numpy Generator (whose
    state then advances).  Returns one NilPoint, or an (size, 3) array.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if size is None:
        return NilPoint(*map(float, rng.random(3)))
    return rng.random((size, 3))


def check_mpoint(p: MPoint, eps: float = DEFAULT_EPS) -> MPoint:
    if not abs(p.z) < eps:
        raise ValueError(f"|z| = {abs(p.z)} is outside the strip of half-width {eps}")
    return p
