"""Flows on G/H and on the strip M, lifting of paths into leaves, and group developments.

All integrators are fixed-step RK4.  Each step runs in the chart around the
current representative and the result is canonicalized afterwards, so no
step ever differentiates across a gluing face.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .actions import ActionFields, to_euclid
from .heis import GroupElem, AlgebraVec, alg_exp, alg_log, mul
from .nilmanifold import DEFAULT_EPS, MPoint, NilPoint, canonicalize_array, left_translate

DEFAULT_DT = 1e-3
SINGULAR_TOL = 1e-12


class SingularFrameError(RuntimeError):
    """The Y-parts of X1, X2, X3 are linearly dependent: the action is degenerate there."""


class LiftFailure(RuntimeError):
    """A lift left the strip before reaching the end of its path."""

    def __init__(self, msg, exit_time=None):
        super().__init__(msg)
        self.exit_time = exit_time


@dataclass
class Trajectory:
    """Samples of a path in M.

    ``points`` rows are (y1, y2, y3, z) with the G/H part canonical.
    ``velocity`` rows are the frame coefficients (Y1, Y2, Y3, Z) of the
    tangent at each sample.  ``exit_time`` is set when the path hit the strip
    boundary, in which case the samples stop there.
    """

    t: np.ndarray
    points: np.ndarray
    velocity: np.ndarray
    dt: float
    exit_time: float | None = None
    development: np.ndarray | None = None
    corners: dict = field(default_factory=dict)   # sample index -> velocity just after a corner

    @property
    def exited(self) -> bool:
        return self.exit_time is not None

    @property
    def end(self) -> MPoint:
        y1, y2, y3, z = self.points[-1]
        return MPoint(NilPoint(float(y1), float(y2), float(y3)), float(z))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "y1", "y2", "y3", "z"])
            for t, row in zip(self.t, self.points):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])

    def then(self, other: "Trajectory") -> "Trajectory":
        """Concatenate; ``other`` must start where this one ends.

        The join keeps this trajectory's (incoming) velocity and records the
        outgoing one in ``corners``.
        """
        if abs(other.dt - self.dt) > 1e-15:
            raise ValueError("trajectories must share a step size")
        n = len(self.t) - 1
        t = np.concatenate([self.t, other.t[1:] - other.t[0] + self.t[-1]])
        corners = dict(self.corners)
        corners[n] = other.velocity[0].copy()
        corners.update({k + n: v for k, v in other.corners.items() if k > 0})
        return Trajectory(t, np.vstack([self.points, other.points[1:]]),
                          np.vstack([self.velocity, other.velocity[1:]]), self.dt,
                          other.exit_time, corners=corners)


# -- closed form -------------------------------------------------------------

def flow_const(v, p, t: float) -> NilPoint:
    """Flow of the constant field v1 Y1 + v2 Y2 + v3 Y3: left translation by exp(t v)."""
    return left_translate(alg_exp(AlgebraVec(*v) * t), p)


def _steps(T, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = max(1, int(np.ceil(T / dt - 1e-9)))
    return n, T / n


# -- general fields on M -----------------------------------------------------

def integrate(field: Callable, p0: MPoint, T: float, dt: float = DEFAULT_DT,
              eps: float = DEFAULT_EPS, sample_every: int = 1) -> Trajectory:
    """RK4 for a single field on M (frame coefficients), canonicalizing after each step.

    Leaving the strip does not raise: the trajectory is truncated and its
    ``exit_time`` records when |z| reached eps.
    """
    n, h = _steps(T, dt)
    x = np.array([*p0.base, p0.z], dtype=float)

    def rhs(x):
        return to_euclid(x[:3], field(x[:3], x[3]))

    ts, pts, vel = [0.0], [x.copy()], [np.asarray(field(x[:3], x[3]), dtype=float)]
    exit_time = None
    for k in range(n):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h * k2)
        k4 = rhs(x + h * k3)
        xn = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if abs(xn[3]) >= eps or not np.isfinite(xn).all():
            exit_time = _crossing_time(k * h, h, x[3], xn[3], eps)
            break
        xn[:3] = canonicalize_array(xn[:3])
        x = xn
        if (k + 1) % sample_every == 0 or k + 1 == n:
            ts.append((k + 1) * h)
            pts.append(x.copy())
            vel.append(np.asarray(field(x[:3], x[3]), dtype=float))
    return Trajectory(np.array(ts), np.array(pts), np.array(vel), h * sample_every, exit_time)


def _crossing_time(t0, h, z0, z1, eps):
    if not np.isfinite(z1):
        return t0
    target = np.sign(z1) * eps
    frac = (target - z0) / (z1 - z0) if z1 != z0 else 1.0
    return t0 + h * float(np.clip(frac, 0.0, 1.0))


def act(fields: ActionFields, g, p: MPoint, dt: float = DEFAULT_DT) -> MPoint:
    """The local action: flow of sum_j (log g)_j X_j for unit time."""
    w = np.asarray(alg_log(g), dtype=float)
    traj = integrate(fields.combine(w), p, 1.0, dt, fields.eps, sample_every=10 ** 9)
    if traj.exited:
        raise LiftFailure("local action left the strip", traj.exit_time)
    return traj.end


# -- paths in G and their lifts ----------------------------------------------

@dataclass(frozen=True)
class GPath:
    """A path t in [0, 1] -> G with its coordinate derivative."""

    point: Callable
    velocity: Callable

    @property
    def start(self) -> GroupElem:
        return GroupElem(*map(float, self.point(0.0)))


def generator_path(g0, i: int, s: int = 1) -> GPath:
    """t -> g0 exp(s t E_i), i in {1, 2, 3}; a loop in G/H since exp(E_i) is in H."""
    if i not in (1, 2, 3) or s not in (1, -1):
        raise ValueError("need i in {1, 2, 3} and s = +-1")
    g0 = GroupElem(*map(float, g0))
    e = np.zeros(3)
    e[i - 1] = s

    def point(t):
        return np.asarray(mul(g0, alg_exp(e * t)))

    # d/dt g0 exp(tv) for a single generator: (v1, v2, v3 + g0.y2 v1)
    vel = np.array([e[0], e[1], e[2] + g0[1] * e[0]])
    return GPath(point, lambda t: vel)


def left_path(v, g0) -> GPath:
    """t -> exp(t v) g0, whose G/H projection is the flow of v1 Y1 + v2 Y2 + v3 Y3."""
    v = AlgebraVec(*map(float, v))
    g0 = GroupElem(*map(float, g0))

    def point(t):
        return np.asarray(mul(alg_exp(v * t), g0))

    def velocity(t):
        y1 = float(point(t)[0])
        return np.array([v[0], v[1], v[2] + y1 * v[1]])

    return GPath(point, velocity)


def _leaf_coefficients(fields, y, z, u):
    M = fields(y, z)
    A = M[..., :3, :]
    det = np.linalg.det(A)
    if np.any(np.abs(det) < SINGULAR_TOL):
        raise SingularFrameError("Y-frame of the action is singular along the path")
    c = np.linalg.solve(A, u[..., None])[..., 0]
    dz = np.einsum("...j,...j->...", M[..., 3, :], c)
    return c, dz


def _lift_rhs(fields, gamma, t, state):
    # state columns: y1, y2, y3, z, x1, x2, x3 (x = development in G)
    y, z, x = state[:, :3], state[:, 3], state[:, 4:]
    g = np.asarray(gamma.point(t), dtype=float)
    gv = np.asarray(gamma.velocity(t), dtype=float)
    u = np.array([gv[0], gv[1], gv[2] - g[0] * gv[1]])
    U = np.broadcast_to(u, y.shape)
    c, dz = _leaf_coefficients(fields, y, z, U)
    out = np.empty_like(state)
    out[:, :3] = to_euclid(y, U)
    out[:, 3] = dz
    out[:, 4:] = to_euclid(x, c)
    return out


def lift_many(fields: ActionFields, gamma: GPath, z0, dt: float = DEFAULT_DT, record=False):
    """Lift ``gamma`` from (gamma(0)H, z) for every z in ``z0`` simultaneously.

    Returns (final_states, exit_times, history) where final_states rows are
    (y1, y2, y3, z, x1, x2, x3) in the chart of gamma, exit_times is NaN for
    lifts that stayed in the strip, and history is a list of (t, states) when
    ``record`` is set.
    """
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    n, h = _steps(1.0, dt)
    g0 = np.asarray(gamma.point(0.0), dtype=float)
    state = np.zeros((z0.size, 7))
    state[:, :3] = g0
    state[:, 3] = z0
    exit_times = np.full(z0.size, np.nan)
    alive = np.abs(z0) < fields.eps
    exit_times[~alive] = 0.0
    history = [(0.0, state.copy())] if record else None
    for k in range(n):
        t = k * h
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        s = state[idx]
        k1 = _lift_rhs(fields, gamma, t, s)
        k2 = _lift_rhs(fields, gamma, t + 0.5 * h, _clip(s + 0.5 * h * k1, fields.eps))
        k3 = _lift_rhs(fields, gamma, t + 0.5 * h, _clip(s + 0.5 * h * k2, fields.eps))
        k4 = _lift_rhs(fields, gamma, t + h, _clip(s + h * k3, fields.eps))
        sn = s + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out = ~(np.abs(sn[:, 3]) < fields.eps)
        if np.any(out):
            for j in np.flatnonzero(out):
                exit_times[idx[j]] = _crossing_time(t, h, s[j, 3], sn[j, 3], fields.eps)
            alive[idx[out]] = False
        keep = idx[~out]
        state[keep] = sn[~out]
        if record:
            history.append(((k + 1) * h, state.copy()))
    return state, exit_times, history


def _clip(s, eps):
    # stage evaluations may poke past the boundary on the step that exits
    s = s.copy()
    s[:, 3] = np.clip(s[:, 3], -eps * (1 - 1e-12), eps * (1 - 1e-12))
    return s


def lift_path(fields: ActionFields, gamma: GPath, start: MPoint, dt: float = DEFAULT_DT) -> Trajectory:
    """Lift of a path in G into the leaf through ``start``.

    ``start.base`` must be the coset of gamma(0) and |start.z| < eps/2.  The
    returned trajectory carries the running group development (in G) of the
    lift in ``development``; ``exit_time`` is set if the lift left the strip.
    """
    if not abs(start.z) < 0.5 * fields.eps:
        raise ValueError("lifts start inside |z| < eps/2")
    g0 = gamma.start
    base = canonicalize_array(np.asarray(g0))
    if np.max(np.abs(base - np.asarray(start.base))) > 1e-9 and \
            np.max(np.abs(canonicalize_array(np.asarray(start.base)) - base)) > 1e-9:
        raise ValueError("start point does not lie over gamma(0)H")
    _, exit_times, hist = lift_many(fields, gamma, [start.z], dt, record=True)
    exit_time = None if np.isnan(exit_times[0]) else float(exit_times[0])
    if exit_time is not None:
        hist = [(t, s) for t, s in hist if t <= exit_time]
    t = np.array([h[0] for h in hist])
    S = np.array([h[1][0] for h in hist])
    pts = np.column_stack([canonicalize_array(S[:, :3]), S[:, 3]])
    vel = np.array([_velocity_at(fields, gamma, tt, s) for tt, s in zip(t, S)])
    return Trajectory(t, pts, vel, float(t[1] - t[0]) if t.size > 1 else dt, exit_time, S[:, 4:].copy())


def _velocity_at(fields, gamma, t, s):
    g = np.asarray(gamma.point(t))
    gv = np.asarray(gamma.velocity(t))
    u = np.array([gv[0], gv[1], gv[2] - g[0] * gv[1]])
    c, dz = _leaf_coefficients(fields, s[None, :3], s[None, 3], u[None])
    return np.array([u[0], u[1], u[2], float(dz[0])])


def group_development(fields: ActionFields, leafpath: Trajectory) -> GroupElem:
    """The element xi of G carrying the start of a leaf path to its end.

    The leaf coefficients c(t) are recovered from the sampled tangents; xi
    solves xi' = c(t) xi, i.e. x' = c1 Y1 + c2 Y2 + c3 Y3 in coordinates,
    integrated by RK4 over pairs of samples (midpoint sample as the half
    step).  Corners of concatenated paths split the integration.
    """
    pts, vel = leafpath.points, leafpath.velocity
    C = fields(pts[:, :3], pts[:, 3])

    def coeffs(k, v):
        sol, _, rank, _ = np.linalg.lstsq(C[k], v, rcond=None)
        if rank < 3:
            raise SingularFrameError("action fields are dependent along the path")
        return sol

    c = np.array([coeffs(k, vel[k]) for k in range(len(pts))])
    n = len(pts) - 1
    bounds = [0] + sorted(k for k in leafpath.corners if 0 < k < n) + [n]
    x = np.zeros(3)
    for a, b in zip(bounds[:-1], bounds[1:]):
        seg = c[a:b + 1].copy()
        if a in leafpath.corners:
            seg[0] = coeffs(a, leafpath.corners[a])
        x = _develop(x, seg, leafpath.dt)
    return GroupElem(*map(float, x))


def _develop(x, c, h):
    # x' = c(t) x on equally spaced samples c[0..n]
    n = len(c) - 1
    f = to_euclid
    k = 0
    while k + 2 <= n:
        H = 2 * h
        k1 = f(x, c[k])
        k2 = f(x + 0.5 * H * k1, c[k + 1])
        k3 = f(x + 0.5 * H * k2, c[k + 1])
        k4 = f(x + H * k3, c[k + 2])
        x = x + (H / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        k += 2
    if k < n:
        # odd sample count: one Heun step
        k1 = f(x, c[k])
        k2 = f(x + h * k1, c[k + 1])
        x = x + 0.5 * h * (k1 + k2)
    return x
