"""Skew torus map and Birkhoff averages, the nilflow return map, box discrepancy,
and the abelianized drift tau_Ab of a perturbed action.

Torus points are stored in angle coordinates (u, w) in [0, 1)^2; the
multiplicative picture is z = exp(2 pi i u), w = exp(2 pi i w), and the skew
map is (z, w) -> (alpha z, z w) with alpha = exp(2 pi i c).
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .actions import ActionFields
from .flow import LiftFailure, SingularFrameError, generator_path, integrate, lift_path
from .heis import AlgebraVec, ab_group
from .nilmanifold import MPoint, canonicalize_array, lift

GOLDEN_C = (math.sqrt(5.0) - 1.0) / 2.0
CONVERGED_TOL = 1e-3


class TorusPoint(NamedTuple):
    u: float
    w: float


class Monomial(NamedTuple):
    """f(z, w) = z^n w^m."""

    n: int
    m: int

    def __call__(self, p) -> complex:
        return complex(np.exp(2j * np.pi * (self.n * p[0] + self.m * p[1])))


def _frac(x):
    r = np.mod(x, 1.0)
    return np.where(r >= 1.0, 0.0, r)


# -- skew map on T^2 ---------------------------------------------------------

def skew_map(c: float, p) -> TorusPoint:
    u, w = p
    return TorusPoint(float(_frac(u + c)), float(_frac(w + u)))


def skew_orbit(c: float, p, N: int) -> tuple[np.ndarray, np.ndarray]:
    """The first N points of the orbit of p, as arrays (u_j, w_j).

    u_j = u0 + j c; w_j = w0 + sum_{i<j} u_i, accumulated over the reduced
    u_i so the round-off stays at the level of direct iteration.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    u0, w0 = float(p[0]), float(p[1])
    u = _frac(u0 + c * np.arange(N))
    w = np.empty(N)
    w[0] = w0
    w[1:] = w0 + np.cumsum(u[:-1])
    return u, _frac(w)


def birkhoff_avg(f: Monomial, c: float, p, N: int, orbit=None) -> complex:
    """g_N(p) = (1/N) sum_{j<N} f(phi^j p), summed with math.fsum per component.

    ``orbit`` may pass a precomputed skew_orbit(c, p, N) to share work across
    monomials.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    f = Monomial(*f)
    if f.n == 0 and f.m == 0:
        return 1.0 + 0.0j
    u, w = orbit if orbit is not None else skew_orbit(c, p, N)
    phase = 2.0 * np.pi * _frac(f.n * u[:N] + f.m * w[:N])
    re = math.fsum(np.cos(phase))
    im = math.fsum(np.sin(phase))
    return complex(re, im) / N


def birkhoff_closed_form(n: int, c: float, p, N: int) -> complex:
    """(1/N)(alpha^{Nn} - 1)/(alpha^n - 1) z^n for the monomial z^n (m = 0)."""
    alpha_n = np.exp(2j * np.pi * _frac(n * c))
    zn = np.exp(2j * np.pi * _frac(n * p[0]))
    if abs(alpha_n - 1.0) < 1e-14:
        return complex(zn)
    return complex((np.exp(2j * np.pi * _frac(N * n * c)) - 1.0) / (alpha_n - 1.0) * zn / N)


def birkhoff_table(fs, c: float, starts, N: int, jobs: int = 1) -> np.ndarray:
    """|g_N| for every monomial in ``fs`` (rows) and starting point (columns).

    One orbit per start is shared by all monomials; starts run on up to
    ``jobs`` threads and are joined in input order.
    """
    fs = [Monomial(*f) for f in fs]
    starts = [tuple(map(float, s)) for s in starts]

    def column(s):
        orbit = skew_orbit(c, s, N)
        return [abs(birkhoff_avg(f, c, s, N, orbit)) for f in fs]

    if jobs <= 1:
        cols = [column(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            cols = list(ex.map(column, starts))
    return np.array(cols, dtype=float).T.reshape(len(fs), len(starts))


def birkhoff_sup(f: Monomial, c: float, starts, N: int, jobs: int = 1) -> float:
    """max over starting points of |g_N|."""
    return float(np.max(birkhoff_table([f], c, starts, N, jobs)))


def monomials(k: int = 3) -> list[Monomial]:
    """All z^n w^m with |n|, |m| <= k except the constant."""
    return [Monomial(n, m) for n in range(-k, k + 1) for m in range(-k, k + 1) if (n, m) != (0, 0)]


# -- nilflow on G/H ----------------------------------------------------------

def return_map(v2: float, v3: float, y1_section: float, p) -> tuple[float, float]:
    """First return to {y1 = y1_section} of the flow of Y1 + v2 Y2 + v3 Y3."""
    y2, y3 = p
    return (float(_frac(y2 + v2)), float(_frac(y3 - y2 + v3 + (y1_section - 0.5) * v2)))


def return_orbit(v2: float, v3: float, y1_section: float, p, n: int) -> np.ndarray:
    """n successive section points starting at p, shape (n, 2)."""
    out = np.empty((n, 2))
    q = (float(p[0]), float(p[1]))
    for k in range(n):
        out[k] = q
        q = return_map(v2, v3, y1_section, q)
    return out


def nilflow_samples(v, p0, T: int, per_period: int = 8) -> np.ndarray:
    """Points of the flow of v = (1, v2, v3) from p0 over T unit periods, in canonical coordinates.

    The section orbit comes from ``return_map``; inside each period the flow
    is evaluated in closed form at the midpoints of ``per_period`` equal
    sub-intervals, so every sample carries the same time weight.
    """
    v = np.asarray(v, dtype=float)
    if abs(v[0] - 1.0) > 1e-12:
        raise ValueError("normalize v so that v1 = 1")
    p0 = canonicalize_array(np.asarray(p0, dtype=float))
    sec = return_orbit(v[1], v[2], p0[0], p0[1:], int(T))
    ts = (np.arange(per_period) + 0.5) / per_period
    # exp(t v) * (y1, y2, y3) = (y1 + t, y2 + t v2, y3 + t v3 + t^2 v2 / 2 + t v2 y1)
    y1 = p0[0] + ts[None, :]
    y2 = sec[:, :1] + ts[None, :] * v[1]
    y3 = sec[:, 1:] + ts * v[2] + 0.5 * ts ** 2 * v[1] + ts * v[1] * p0[0]
    pts = np.stack(np.broadcast_arrays(y1, y2, y3), axis=-1).reshape(-1, 3)
    return canonicalize_array(pts)


def box_discrepancy(points, k: int = 8) -> float:
    """max over the k^d boxes of |fraction of points in box - box volume|.

    ``points`` is an (N, d) array in [0, 1)^d or a Trajectory, whose G/H
    coordinates are used.
    """
    pts = getattr(points, "points", points)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if hasattr(points, "points"):
        pts = pts[:, :3]
    if pts.shape[0] < 1:
        raise ValueError("need at least one sample")
    d = pts.shape[1]
    idx = np.minimum((pts * k).astype(int), k - 1)
    flat = np.ravel_multi_index(idx.T, (k,) * d)
    counts = np.bincount(flat, minlength=k ** d)
    return float(np.max(np.abs(counts / pts.shape[0] - 1.0 / k ** d)))


def discrepancy_to_csv(rows, path):
    """rows of (test, parameter, size, value)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["test", "parameter", "size", "value"])
        for r in rows:
            w.writerow(r)


# -- tau~, tau_Ab, xi --------------------------------------------------------

def tau_tilde(fields: ActionFields, p: MPoint, v) -> AlgebraVec:
    """The w with sum_j w_j (Y-part of X_j at p) = v."""
    A = fields.y_frame(np.asarray(p.base, dtype=float), p.z)
    if abs(np.linalg.det(A)) < 1e-12:
        raise SingularFrameError("Y-parts of X1, X2, X3 are dependent at p")
    return AlgebraVec(*map(float, np.linalg.solve(A, np.asarray(v, dtype=float))))


@dataclass
class DriftReport:
    """Running estimate of tau_Ab(v): the time average of Ab'(tau~(v)) along the leaf flow of v."""

    value: tuple
    horizon: float
    dt: float
    trend: list = field(default_factory=list)   # [(t, (a1, a2)), ...] at T/4, T/2, T
    tol: float = CONVERGED_TOL

    @property
    def converged(self) -> bool:
        if len(self.trend) < 2:
            return False
        (_, a), (_, b) = self.trend[-2:]
        return float(np.hypot(a[0] - b[0], a[1] - b[1])) < self.tol

    def as_dict(self):
        return {"value": list(self.value), "horizon": self.horizon, "dt": self.dt,
                "trend": [[t, list(a)] for t, a in self.trend], "converged": self.converged}

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), **kw)


class DriftExit(LiftFailure):
    """The leaf flow of v left the strip before the horizon; ``report`` holds the partial average."""

    def __init__(self, msg, exit_time, report):
        super().__init__(msg, exit_time)
        self.report = report


def _leaf_flow_field(fields, v):
    v = np.asarray(v, dtype=float)

    def field(y, z):
        C = fields(y, z)
        w = np.linalg.solve(C[..., :3, :], v)
        return np.array([v[0], v[1], v[2], float(C[..., 3, :] @ w)])

    return field


def tau_ab(fields: ActionFields, p0: MPoint, v, T: float = 10.0, dt: float = 1e-2,
           a: float | None = None) -> DriftReport:
    """Estimate tau_Ab,p0(v) by (1/T) int_0^T Ab'(tau~_{p(s)}(v)) ds along p(s) = Psi_p0(s v).

    p(s) is the path in the leaf of p0 whose G/H projection has constant
    Y-frame velocity v.  When the translation number ``a`` is given, v must
    lie in the horizontal subalgebra (v1 + a v2 = 0).  Raises DriftExit if
    the path leaves the strip before T.
    """
    v = np.asarray(v, dtype=float)
    if a is not None and abs(v[0] + a * v[1]) > 1e-9:
        raise ValueError("v is not in the horizontal subalgebra")
    traj = integrate(_leaf_flow_field(fields, v), p0, T, dt, fields.eps)
    C = fields(traj.points[:, :3], traj.points[:, 3])
    W = np.linalg.solve(C[:, :3, :], np.broadcast_to(v, (len(traj.t), 3))[..., None])[..., 0]
    integrand = W[:, :2]
    # running trapezoid integral
    incr = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(traj.t)[:, None]
    cum = np.vstack([np.zeros(2), np.cumsum(incr, axis=0)])
    t_end = traj.t[-1]

    def avg_at(t):
        k = int(np.searchsorted(traj.t, t - 1e-12))
        k = min(k, len(traj.t) - 1)
        return (float(cum[k, 0] / traj.t[k]), float(cum[k, 1] / traj.t[k])) if traj.t[k] > 0 \
            else tuple(map(float, integrand[0]))

    marks = [t for t in (T / 4, T / 2, T) if t <= t_end + 1e-12]
    report = DriftReport(avg_at(t_end), float(t_end), traj.dt, [(float(t), avg_at(t)) for t in marks])
    if traj.exited:
        raise DriftExit(f"leaf flow of v={tuple(v)} left the strip at t={traj.exit_time:.4g}",
                        traj.exit_time, report)
    return report


def xi_ab_e3(fields: ActionFields, p0: MPoint, dt: float = 1e-3) -> tuple[float, float]:
    """Ab of the development of the lifted gamma_3 loop through p0."""
    traj = lift_path(fields, generator_path(lift(p0.base), 3), p0, dt)
    if traj.exited:
        raise LiftFailure("gamma_3 lift left the strip", traj.exit_time)
    return tuple(map(float, ab_group(traj.development[-1])))


def parallel_residual(u, v, atol: float = 1e-12) -> float:
    """|u x v| / (|u| |v|) for plane vectors; 0 when either is (numerically) zero."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu, nv = np.hypot(*u), np.hypot(*v)
    if nu < atol or nv < atol:
        return 0.0
    return float(abs(u[0] * v[1] - u[1] * v[0]) / (nu * nv))


def is_parallel(u, v, tol: float = 1e-2, atol: float = 1e-12) -> bool:
    return parallel_residual(u, v, atol) < tol


def is_multiple_of(u, v, tol: float = 1e-2) -> bool:
    """u = s v for some real s; with v = 0 this forces |u| < tol."""
    v = np.asarray(v, dtype=float)
    if np.hypot(*v) < tol:
        return float(np.hypot(*np.asarray(u, dtype=float))) < tol
    return is_parallel(u, v, tol)
