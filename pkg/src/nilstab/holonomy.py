"""Leaf holonomy pseudogroup f1, f2, f3 and what can be read off it.

f_i(z) is the height at which the lift of the loop t -> g0 exp(t E_i),
started at (g0 H, z), closes up.  Maps are sampled on a z-grid and
interpolated with monotone cubics (PCHIP), which keeps compositions monotone.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
import numpy as np
from scipy.interpolate import PchipInterpolator

from .actions import ActionFields
from .flow import DEFAULT_DT, LiftFailure, generator_path, lift_many
from .heis import IDENTITY, GroupElem

log = logging.getLogger(__name__)

DEFAULT_GRID = 401
NEAR_IDENTITY = 0.1


class OutsideGrid(ValueError):
    """A composition or orbit left the sampled z-range."""


def default_grid(eps=1.0, n=DEFAULT_GRID) -> np.ndarray:
    """n cell midpoints of (-eps/2, eps/2), so the open interval is respected."""
    w = eps / n
    return -0.5 * eps + w * (np.arange(n) + 0.5)


@dataclass
class HolonomyMaps:
    grid: np.ndarray
    f: np.ndarray                       # (3, n): f1, f2, f3 on the grid
    finv: np.ndarray | None = None      # (3, n): lifts with s = -1, when computed
    g0: GroupElem = IDENTITY
    near_identity_tol: float = NEAR_IDENTITY
    _interp: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        for i in range(3):
            if np.any(np.diff(self.f[i]) <= 0):
                raise ValueError(f"f{i + 1} is not strictly increasing on the grid")
        if not self.near_identity:
            log.warning("holonomy maps are %.3g from the identity (> %.3g): outside the near-identity regime",
                        self.distance_from_identity, self.near_identity_tol)

    @property
    def distance_from_identity(self) -> float:
        return float(np.max(np.abs(self.f - self.grid)))

    @property
    def near_identity(self) -> bool:
        return self.distance_from_identity <= self.near_identity_tol

    @property
    def lo(self):
        return self.grid[0]

    @property
    def hi(self):
        return self.grid[-1]

    def _map(self, i, s):
        key = (i, s)
        if key not in self._interp:
            if s == 1:
                self._interp[key] = PchipInterpolator(self.grid, self.f[i - 1], extrapolate=False)
            elif self.finv is not None:
                self._interp[key] = PchipInterpolator(self.grid, self.finv[i - 1], extrapolate=False)
            else:
                # invert the monotone graph
                self._interp[key] = PchipInterpolator(self.f[i - 1], self.grid, extrapolate=False)
        return self._interp[key]

    def apply(self, i: int, z, s: int = 1):
        """f_i^s(z); raises OutsideGrid when z is not in the sampled range."""
        z = np.asarray(z, dtype=float)
        out = self._map(i, s)(z)
        if np.any(np.isnan(out)):
            raise OutsideGrid(f"f{i}^{s} evaluated outside its sampled range")
        return out if out.shape else float(out)

    def f1(self, z):
        return self.apply(1, z)

    def f2(self, z):
        return self.apply(2, z)

    def f3(self, z):
        return self.apply(3, z)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "f1", "f2", "f3"])
            for k, z in enumerate(self.grid):
                w.writerow([repr(float(z))] + [repr(float(self.f[i, k])) for i in range(3)])

    @classmethod
    def from_csv(cls, path, **kw) -> "HolonomyMaps":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:4].T, **kw)


def holonomy_maps(fields: ActionFields, grid=None, g0=IDENTITY, dt: float = DEFAULT_DT,
                  inverses: bool = True, near_identity_tol: float = NEAR_IDENTITY) -> HolonomyMaps:
    """Sample f1, f2, f3 (and their s = -1 counterparts) by lifting the generator loops.

    Raises LiftFailure if any lift leaves the strip.
    """
    grid = default_grid(fields.eps) if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.abs(grid) >= 0.5 * fields.eps):
        raise ValueError("grid must lie inside (-eps/2, eps/2)")
    f = np.empty((3, grid.size))
    finv = np.empty((3, grid.size)) if inverses else None
    for i in (1, 2, 3):
        for s in ((1, -1) if inverses else (1,)):
            state, exit_times, _ = lift_many(fields, generator_path(g0, i, s), grid, dt)
            if not np.all(np.isnan(exit_times)):
                bad = np.flatnonzero(~np.isnan(exit_times))
                raise LiftFailure(f"lift of generator {i} (s={s}) left the strip from z={grid[bad[0]]:.4g}",
                                  float(np.nanmin(exit_times)))
            (f if s == 1 else finv)[i - 1] = state[:, 3]
    return HolonomyMaps(grid, f, finv, GroupElem(*map(float, g0)), near_identity_tol)


@dataclass
class PseudogroupReport:
    commutator_residual: float      # max |f2^-1 f1^-1 f2 f1 - f3|
    central_residual_1: float       # max |[f3, f1] - id|
    central_residual_2: float       # max |[f3, f2] - id|
    n_checked: int
    n_skipped: int
    tol: float

    @property
    def passed(self) -> bool:
        worst = max(self.commutator_residual, self.central_residual_1, self.central_residual_2)
        return self.n_checked > 0 and worst < self.tol

    def as_dict(self):
        return {"commutator_residual": self.commutator_residual,
                "central_residual_1": self.central_residual_1,
                "central_residual_2": self.central_residual_2,
                "n_checked": self.n_checked, "n_skipped": self.n_skipped,
                "tol": self.tol, "passed": self.passed}


def _commutator(maps, a, b, z):
    # [f_a, f_b] = f_a^-1 f_b^-1 f_a f_b, applied right to left
    w = maps.apply(b, z)
    w = maps.apply(a, w)
    w = maps.apply(b, w, -1)
    return maps.apply(a, w, -1)


def check_pseudogroup_relations(maps: HolonomyMaps, tol: float = 1e-5) -> PseudogroupReport:
    """Check [f2, f1] = f3 and that f3 commutes with f1, f2 wherever compositions stay on the grid."""
    res = {"c": [], "31": [], "32": []}
    skipped = 0
    for z in maps.grid:
        try:
            c = _commutator(maps, 2, 1, z) - maps.f3(z)
            r31 = _commutator(maps, 3, 1, z) - z
            r32 = _commutator(maps, 3, 2, z) - z
        except OutsideGrid:
            skipped += 1
            continue
        res["c"].append(abs(c))
        res["31"].append(abs(r31))
        res["32"].append(abs(r32))
    mx = lambda v: float(max(v)) if v else float("nan")
    return PseudogroupReport(mx(res["c"]), mx(res["31"]), mx(res["32"]),
                             len(res["c"]), skipped, tol)


# -- translation number ------------------------------------------------------

class OrbitExit(OutsideGrid):
    """The f2-orbit left the domain before n iterations; ``estimate`` uses the last valid m."""

    def __init__(self, msg, estimate=None, m=0):
        super().__init__(msg)
        self.estimate = estimate
        self.m = m


def _as_maps(maps):
    if isinstance(maps, HolonomyMaps):
        return (lambda z: maps.apply(1, z), lambda z: maps.apply(1, z, -1), lambda z: maps.apply(2, z))
    f1, f2, *rest = maps
    f1inv = rest[0] if rest else None
    if f1inv is None:
        raise ValueError("translation_number needs f1^-1 when given plain callables")
    return f1, f1inv, f2


class _Stalled(Exception):
    pass


class _F1Orbit:
    """Lazy two-sided orbit o_k = f1^k(z0), used as a coordinate on the line.

    A cursor remembers the last fundamental interval, so a slowly moving
    f2-orbit costs amortized O(1) per lookup.
    """

    def __init__(self, f1, f1inv, z0, sign, fixed_tol, max_steps):
        self.f1, self.f1inv, self.sign = f1, f1inv, sign
        self.fixed_tol, self.max_steps = fixed_tol, max_steps
        self.pts = {0: float(z0)}
        self.kmin = self.kmax = 0
        self.k = 0

    def __getitem__(self, k):
        while k > self.kmax:
            self._grow(self.kmax + 1, self.f1(self.pts[self.kmax]))
        while k < self.kmin:
            self._grow(self.kmin - 1, self.f1inv(self.pts[self.kmin]))
        return self.pts[k]

    def _grow(self, k, val):
        val = float(val)
        prev = self.pts[k - 1] if k > 0 else self.pts[k + 1]
        if abs(val - prev) < self.fixed_tol or len(self.pts) > self.max_steps:
            raise _Stalled
        self.pts[k] = val
        self.kmin, self.kmax = min(self.kmin, k), max(self.kmax, k)

    def position(self, w):
        s = self.sign
        k = self.k
        while s * (w - self[k]) < 0:
            k -= 1
        while s * (w - self[k + 1]) >= 0:
            k += 1
        self.k = k
        a, b = self[k], self[k + 1]
        return k + (w - a) / (b - a)


def translation_number(maps, z0: float, n: int = 10_000, fixed_tol: float = 1e-10):
    """Translation number of f2 relative to f1, or None when undefined (f1 has a fixed point on the orbit).

    The f1-orbit of z0 gives a coordinate on the line (orbit index plus
    linear interpolation inside the fundamental interval); the estimate is
    that coordinate of f2^n(z0) divided by n.  ``maps`` is a HolonomyMaps or
    a tuple (f1, f2, f1_inverse) of callables.  Raises OrbitExit when the
    orbits leave the sampled range first.
    """
    f1, f1inv, f2 = _as_maps(maps)
    d = float(f1(z0)) - z0
    if abs(d) < fixed_tol:
        return None
    orbit = _F1Orbit(f1, f1inv, z0, np.sign(d), fixed_tol, 100 * n + 1000)
    w, pos = z0, 0.0
    for m in range(1, n + 1):
        try:
            w = float(f2(w))
            pos = orbit.position(w)
        except OutsideGrid as exc:
            est = pos / (m - 1) if m > 1 else None
            raise OrbitExit(f"orbit left the grid after {m - 1} iterations", est, m - 1) from exc
        except _Stalled:
            return None
    return pos / n


def is_compact_leaf(maps: HolonomyMaps, z0: float, tol: float = 1e-9) -> bool:
    return all(abs(maps.apply(i, z0) - z0) < tol for i in (1, 2, 3))


def is_abelian_leaf(maps: HolonomyMaps, z0: float, tol: float = 1e-9) -> bool:
    return abs(maps.apply(3, z0) - z0) < tol


@dataclass(frozen=True)
class HorizontalSubalgebra:
    """E = {(-a y, y, z)}: the kernel of alpha'(v) = v1 + a v2."""

    a: float

    def alpha_prime(self, v) -> float:
        return v[0] + self.a * v[1]

    def contains(self, v, tol=1e-9) -> bool:
        return abs(self.alpha_prime(v)) < tol

    def element(self, y: float, z: float):
        return (-self.a * y, y, z)

    @property
    def horizontal_generator(self):
        return (-self.a, 1.0, 0.0)
