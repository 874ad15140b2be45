"""Automorphism families, homogeneous horizontal actions and their explicit perturbations.

Vector fields on M = G/H x (-eps, eps) are written in the frame

    Y1 = d/dy1,  Y2 = d/dy2 + y1 d/dy3,  Y3 = d/dy3,  Z = d/dz

whose coefficients are functions on G/H (i.e. invariant under the gluing).
A field is a callable ``f(y, z)`` with ``y`` of shape (..., 3) and ``z`` of
shape (...); it returns frame coefficients of shape (..., 4).  An action is
three such fields; :class:`ActionFields` stores them as one callable
returning a (..., 4, 3) array whose column j holds the coefficients of X_j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .heis import alg_exp, alg_log
from .nilmanifold import DEFAULT_EPS, haar_sample

HOM_TOL = 1e-9
DERIV_STEP = 1e-5


class FamilyError(ValueError):
    """A matrix or family violates the homomorphism constraints."""


# -- homomorphism matrices ---------------------------------------------------

def check_hom_matrix(A, tol: float = HOM_TOL) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.shape != (3, 3):
        raise FamilyError(f"expected a 3x3 matrix, got shape {A.shape}")
    if abs(A[0, 2]) > tol or abs(A[1, 2]) > tol:
        raise FamilyError("a13 and a23 must vanish")
    det2 = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if abs(A[2, 2] - det2) > tol:
        raise FamilyError(f"a33 = {A[2, 2]} but a11*a22 - a12*a21 = {det2}")
    return A


def hom_from_matrix(A) -> Callable:
    """The endomorphism g -> exp(A log g) of G, with A acting on (v1, v2, v3).

    It is an automorphism iff det A != 0.
    """
    A = check_hom_matrix(A)

    def phi(g):
        return alg_exp(A @ np.asarray(alg_log(g)))

    return phi


# -- families z -> A(z) ------------------------------------------------------

class AutoFamily:
    """A smooth family of homomorphism matrices with A(0) = I.

    ``matrix(z)`` must accept an array of z and return (..., 3, 3).  When no
    analytic ``derivative`` is supplied, a central difference with step 1e-5
    is used.
    """

    def __init__(self, matrix, derivative=None, name="custom", eps=DEFAULT_EPS, check=True):
        self._matrix = matrix
        self._derivative = derivative
        self.name = name
        self.eps = eps
        if check:
            self.validate()

    def __repr__(self):
        return f"AutoFamily({self.name!r})"

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        try:
            out = np.asarray(self._matrix(z), dtype=float)
        except (TypeError, ValueError):
            if not z.shape:
                raise
            out = None
        if out is not None and out.shape == z.shape + (3, 3):
            return out
        if out is None or out.shape == (3, 3):
            # scalar-only callable (or a constant family)
            rows = [np.asarray(self._matrix(float(zz)), dtype=float) for zz in z.ravel()]
            return np.stack(rows).reshape(z.shape + (3, 3))
        raise FamilyError(f"family returned shape {out.shape} for z of shape {z.shape}")

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self._derivative is not None:
            out = np.asarray(self._derivative(z), dtype=float)
            if out.shape == (3, 3) and z.shape:
                out = np.broadcast_to(out, z.shape + (3, 3)).copy()
            return out
        h = DERIV_STEP
        return (self(z + h) - self(z - h)) / (2 * h)

    def check_z(self, z):
        if np.any(np.abs(np.asarray(z)) >= self.eps):
            raise ValueError(f"z outside the strip (-{self.eps}, {self.eps})")

    def validate(self, n_samples=9):
        A0 = self(0.0)
        if not np.allclose(A0, np.eye(3), atol=1e-12, rtol=0):
            raise FamilyError(f"family {self.name!r} does not satisfy A(0) = I")
        for z in np.linspace(-0.9 * self.eps, 0.9 * self.eps, n_samples):
            check_hom_matrix(self(z))
        return self


def identity_family(eps=DEFAULT_EPS) -> AutoFamily:
    return AutoFamily(
        lambda z: np.broadcast_to(np.eye(3), np.shape(z) + (3, 3)).copy(),
        lambda z: np.zeros(np.shape(z) + (3, 3)),
        name="identity", eps=eps)


def linear_family(B, eps=DEFAULT_EPS) -> AutoFamily:
    """Upper block I + z B#, bottom row z (b31, b32), a33 forced to the 2x2 determinant.

    Only the entries b11, b12, b21, b22, b31, b32 of ``B`` are used; b13, b23
    must be zero.  For nilpotent B# this is exactly I + zB.
    """
    B = np.asarray(B, dtype=float)
    if B.shape == (2, 2):
        B = np.block([[B, np.zeros((2, 1))], [np.zeros((1, 3))]])
    if abs(B[0, 2]) > HOM_TOL or abs(B[1, 2]) > HOM_TOL:
        raise FamilyError("b13 and b23 must vanish")
    Bs = B[:2, :2]
    tr, det = np.trace(Bs), np.linalg.det(Bs)

    def matrix(z):
        z = np.asarray(z, dtype=float)[..., None, None]
        A = np.eye(3) + z * B
        A[..., 2, 2] = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
        return A

    def derivative(z):
        z = np.asarray(z, dtype=float)
        D = np.broadcast_to(B, z.shape + (3, 3)).copy()
        D[..., 2, 2] = tr + 2 * z * det
        return D

    return AutoFamily(matrix, derivative, name="linear", eps=eps)


def mixed_family(lam: float, eps=DEFAULT_EPS) -> AutoFamily:
    """A(z) = diag(exp(-lam z), exp(2 lam z), exp(lam z)), so A'(0) = diag(-lam, 2 lam, lam)."""
    rates = np.array([-lam, 2 * lam, lam])

    def matrix(z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape + (3, 3))
        for i in range(3):
            out[..., i, i] = np.exp(rates[i] * z)
        return out

    def derivative(z):
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape + (3, 3))
        for i in range(3):
            out[..., i, i] = rates[i] * np.exp(rates[i] * z)
        return out

    return AutoFamily(matrix, derivative, name=f"mixed:{lam}", eps=eps)


_ENTRY = {"a11": (0, 0), "a12": (0, 1), "a21": (1, 0), "a22": (1, 1), "a31": (2, 0), "a32": (2, 1)}


def polynomial_family(coeffs: dict, eps=DEFAULT_EPS) -> AutoFamily:
    """Entries given as polynomials in z without constant term, added to I.

    ``coeffs`` maps entry names (a11, a12, a21, a22, a31, a32) to coefficient
    lists [c1, c2, ...] meaning c1 z + c2 z^2 + ...; a33 is derived.
    """
    unknown = set(coeffs) - set(_ENTRY)
    if unknown:
        raise FamilyError(f"unknown or non-free entries: {sorted(unknown)}")
    polys = {k: np.polynomial.Polynomial([0.0] + [float(c) for c in v]) for k, v in coeffs.items()}
    dpolys = {k: p.deriv() for k, p in polys.items()}

    def _fill(z, table, base):
        z = np.asarray(z, dtype=float)
        A = np.broadcast_to(base, z.shape + (3, 3)).copy()
        for k, p in table.items():
            i, j = _ENTRY[k]
            A[..., i, j] += p(z)
        return A

    def matrix(z):
        A = _fill(z, polys, np.eye(3))
        A[..., 2, 2] = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
        return A

    def derivative(z):
        A = matrix(z)
        D = _fill(z, dpolys, np.zeros((3, 3)))
        D[..., 2, 2] = (D[..., 0, 0] * A[..., 1, 1] + A[..., 0, 0] * D[..., 1, 1]
                        - D[..., 0, 1] * A[..., 1, 0] - A[..., 0, 1] * D[..., 1, 0])
        return D

    return AutoFamily(matrix, derivative, name="custom", eps=eps)


def random_family(rng, degree=3, scale=0.5, eps=DEFAULT_EPS) -> AutoFamily:
    rng = np.random.default_rng(rng)
    coeffs = {k: list(scale * rng.standard_normal(degree)) for k in _ENTRY}
    return polynomial_family(coeffs, eps=eps)


def a_sharp(F: AutoFamily, z: float) -> np.ndarray:
    """Derivative of the upper 2x2 block of A at z."""
    F.check_z(z)
    return np.asarray(F.derivative(float(z)))[:2, :2].copy()


# -- action fields -----------------------------------------------------------

def frame_field(i: int):
    """Constant frame field: 0 -> Y1, 1 -> Y2, 2 -> Y3, 3 -> Z."""
    e = np.zeros(4)
    e[i] = 1.0

    def f(y, z):
        return np.broadcast_to(e, np.shape(z) + (4,)).copy()

    return f


Y1, Y2, Y3, Z = (frame_field(i) for i in range(4))


@dataclass(frozen=True)
class ActionFields:
    """Three fields X1, X2, X3 on M, as a callable returning (..., 4, 3) coefficients."""

    coefficients: Callable
    name: str = "fields"
    eps: float = DEFAULT_EPS
    horizontal: bool = False

    def __call__(self, y, z):
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        C = np.asarray(self.coefficients(y, z), dtype=float)
        return np.broadcast_to(C, z.shape + (4, 3))

    def field(self, j: int):
        """X_{j+1} as a standalone field."""
        return lambda y, z: self(y, z)[..., :, j]

    def combine(self, w):
        """The field w1 X1 + w2 X2 + w3 X3 for constant weights w."""
        w = np.asarray(w, dtype=float)
        return lambda y, z: self(y, z) @ w

    def y_frame(self, y, z):
        """(..., 3, 3) matrix whose column j is the Y-part of X_j."""
        return self(y, z)[..., :3, :]

    def with_columns(self, replace: dict, name=None) -> "ActionFields":
        """Swap selected X_j (keys 0..2) for other fields; used to build broken examples."""
        base = self.coefficients

        def coefficients(y, z):
            C = np.array(np.broadcast_to(base(y, z), np.shape(z) + (4, 3)))
            for j, f in replace.items():
                C[..., :, j] = f(y, z)
            return C

        return ActionFields(coefficients, name or self.name + "*", self.eps, False)


def fields_from_family(F: AutoFamily) -> ActionFields:
    """X_j = sum_i a_ij(z) Y_i, the generators of the homogeneous horizontal action."""

    def coefficients(y, z):
        C = np.zeros(np.shape(z) + (4, 3))
        C[..., :3, :] = F(z)
        return C

    return ActionFields(coefficients, name=F.name, eps=F.eps, horizontal=True)


# -- perturbations -----------------------------------------------------------

@dataclass(frozen=True)
class Bump:
    """psi(z) = s exp(1 - 1/(1 - (z/delta)^2)) on |z| < delta, zero outside; psi(0) = s."""

    amplitude: float = 0.05
    support: float = 0.2

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        u = (z / self.support) ** 2
        inside = u < 1.0
        safe = np.where(inside, u, 0.0)
        return np.where(inside, self.amplitude * np.exp(1.0 - 1.0 / (1.0 - safe)), 0.0)


@dataclass(frozen=True)
class PerturbationSpec:
    """Data for the nilpotent-case perturbation: kernel vector (p2, -p1), q's and the bump.

    c_ij = q_i p_j with i in {1, 2, 4}.
    """

    p1: float
    p2: float
    q1: float
    q2: float
    q4: float = 1.0
    bump: Callable = field(default_factory=Bump)

    @property
    def c(self) -> dict:
        q = {1: self.q1, 2: self.q2, 4: self.q4}
        p = {1: self.p1, 2: self.p2}
        return {(i, j): q[i] * p[j] for i in q for j in p}

    def q_residual(self, B) -> float:
        B = np.asarray(B, dtype=float)
        return self.q1 * self.p1 + self.q2 * self.p2 + self.q4 * (B[2, 1] * self.p1 - B[2, 0] * self.p2)

    def validate(self, B, tol=1e-12):
        if self.p1 == 0 and self.p2 == 0:
            raise FamilyError("(p1, p2) must be nonzero")
        if self.q4 == 0:
            raise FamilyError("q4 must be nonzero")
        scale = max(1.0, float(np.max(np.abs(B))))
        if abs(self.q_residual(B)) > tol * scale:
            raise FamilyError(f"q-equation residual {self.q_residual(B):.3e}")
        psi0 = float(self.bump(0.0))
        switched_off = isinstance(self.bump, Bump) and self.bump.amplitude == 0
        if not (psi0 > 0 or switched_off):
            raise FamilyError("bump must satisfy psi(0) > 0")
        return self

    @classmethod
    def default_for(cls, B, amplitude=0.05, support=0.2, q4=1.0, bump=None) -> "PerturbationSpec":
        """Deterministic choice: unit kernel vector from the SVD, q4 given, (q1, q2) minimum norm."""
        B = np.asarray(B, dtype=float)
        _, _, vt = np.linalg.svd(B[:2, :2])
        k = vt[-1]
        if k[np.flatnonzero(np.abs(k) > 1e-14)[0]] < 0:
            k = -k
        p2, p1 = float(k[0]), float(-k[1])
        r = q4 * (B[2, 1] * p1 - B[2, 0] * p2)
        q1, q2 = -r * p1, -r * p2   # p is a unit vector
        return cls(p1, p2, q1, q2, q4, bump if bump is not None else Bump(amplitude, support))


def is_nilpotent(M, tol=1e-9) -> bool:
    M = np.asarray(M, dtype=float)
    return bool(np.max(np.abs(M @ M)) < tol and abs(np.trace(M)) < tol and abs(np.linalg.det(M)) < tol)


def perturb_nilpotent(F: AutoFamily, spec: PerturbationSpec | None = None, **kw) -> ActionFields:
    """Perturbation of the linearized action I + zB, B = A'(0), when A#(0) is nilpotent.

    X1~ = X1^ + psi (c11 Y1 + c21 Y2 + c41 Z)
    X2~ = X2^ + psi (c12 Y1 + c22 Y2 + c42 Z)
    X3~ = Y3
    Extra keyword arguments go to :meth:`PerturbationSpec.default_for`.
    """
    B = np.asarray(F.derivative(0.0), dtype=float)
    Bs = B[:2, :2]
    if not is_nilpotent(Bs):
        raise FamilyError("A#(0) is not nilpotent")
    if spec is None:
        spec = PerturbationSpec.default_for(B, **kw)
    spec.validate(B)
    if np.max(np.abs(Bs @ np.array([spec.p2, -spec.p1]))) > HOM_TOL:
        raise FamilyError("(p2, -p1) is not in the kernel of A#(0)")
    c = spec.c
    bump = spec.bump

    def coefficients(y, z):
        z = np.asarray(z, dtype=float)
        zz = z[..., None]
        psi = np.asarray(bump(z), dtype=float)[..., None]
        C = np.zeros(z.shape + (4, 3))
        C[..., :3, 0] = np.array([1.0, 0.0, 0.0]) + zz * B[:, 0]
        C[..., :3, 1] = np.array([0.0, 1.0, 0.0]) + zz * B[:, 1]
        C[..., 2, 2] = 1.0
        C[..., [0, 1, 3], 0] += psi * np.array([c[1, 1], c[2, 1], c[4, 1]])
        C[..., [0, 1, 3], 1] += psi * np.array([c[1, 2], c[2, 2], c[4, 2]])
        return C

    return ActionFields(coefficients, name=f"{F.name}+nilpotent", eps=F.eps)


def perturb_mixed(lam: float, c: float, eps=DEFAULT_EPS) -> ActionFields:
    """X1 = e^{-lz} Y1,  X2 = e^{2lz} Y2 - (c/l) e^{lz} Z,  X3 = e^{lz} Y3 - c Y1."""
    if lam == 0:
        raise FamilyError("lambda must be nonzero")

    def coefficients(y, z):
        z = np.asarray(z, dtype=float)
        e = np.exp(lam * z)
        C = np.zeros(z.shape + (4, 3))
        C[..., 0, 0] = 1.0 / e
        C[..., 1, 1] = e * e
        C[..., 3, 1] = -(c / lam) * e
        C[..., 2, 2] = e
        C[..., 0, 2] = -c
        return C

    return ActionFields(coefficients, name=f"mixed:{lam}:{c}", eps=eps, horizontal=(c == 0))


# -- brackets ----------------------------------------------------------------

def to_euclid(y, c):
    """Frame coefficients -> coordinate components (dy1, dy2, dy3, dz)."""
    y = np.asarray(y, dtype=float)
    c = np.asarray(c, dtype=float)
    out = c.copy()
    out[..., 2] = c[..., 2] + y[..., 0] * c[..., 1]
    return out


def from_euclid(y, e):
    y = np.asarray(y, dtype=float)
    e = np.asarray(e, dtype=float)
    out = e.copy()
    out[..., 2] = e[..., 2] - y[..., 0] * e[..., 1]
    return out


def bracket_fd(F1, F2, y, z, h=1e-4, eps=DEFAULT_EPS):
    """Central-difference Lie bracket [F1, F2] = DF2.F1 - DF1.F2, in frame coefficients.

    ``y`` (..., 3) is used as is: the stencil lives in the chart around that
    representative and is never re-canonicalized, so it cannot straddle a
    gluing face.
    """
    if not 0 < h <= 1e-3:
        raise ValueError("step must satisfy 0 < h <= 1e-3")
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) + h >= eps):
        raise ValueError("finite-difference stencil leaves the strip")
    x = np.concatenate([y, z[..., None]], axis=-1)

    def E(F, x):
        return to_euclid(x[..., :3], F(x[..., :3], x[..., 3]))

    def jac(F):
        cols = []
        for k in range(4):
            d = np.zeros(4)
            d[k] = h
            cols.append((E(F, x + d) - E(F, x - d)) / (2 * h))
        return np.stack(cols, axis=-1)

    v1, v2 = E(F1, x), E(F2, x)
    b = np.einsum("...ik,...k->...i", jac(F2), v1) - np.einsum("...ik,...k->...i", jac(F1), v2)
    return from_euclid(y, b)


@dataclass
class RelationReport:
    residual_12_3: float
    residual_13: float
    residual_23: float
    min_independence: float
    n_samples: int
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.residual_12_3, self.residual_13, self.residual_23) < self.tol and self.min_independence > 1e-9

    def as_dict(self):
        return {
            "residual_[X1,X2]-X3": self.residual_12_3,
            "residual_[X1,X3]": self.residual_13,
            "residual_[X2,X3]": self.residual_23,
            "min_independence": self.min_independence,
            "n_samples": self.n_samples,
            "tol": self.tol,
            "passed": self.passed,
        }


def verify_heisenberg_relations(fields: ActionFields, n_samples=100, tol=1e-6, h=1e-4, seed=0):
    """Max bracket-relation residuals over random points with |z| < eps/2.

    Independence is the 3-volume sqrt(det(X^T X)) of (X1, X2, X3) in the
    orthonormal-by-convention frame (Y1, Y2, Y3, Z).
    """
    rng = np.random.default_rng(seed)
    y = haar_sample(rng, size=n_samples)
    z = rng.uniform(-0.5 * fields.eps, 0.5 * fields.eps, size=n_samples)
    X1, X2, X3 = (fields.field(j) for j in range(3))
    r12 = bracket_fd(X1, X2, y, z, h, fields.eps) - X3(y, z)
    r13 = bracket_fd(X1, X3, y, z, h, fields.eps)
    r23 = bracket_fd(X2, X3, y, z, h, fields.eps)
    C = fields(y, z)
    gram = np.einsum("nij,nik->njk", C, C)
    vol = np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))
    norm = lambda r: float(np.max(np.linalg.norm(r, axis=-1)))
    return RelationReport(norm(r12), norm(r13), norm(r23), float(np.min(vol)), n_samples, tol)
