"""Stability verdicts from A#(0) and A'(0), and end-to-end witness experiments.

The decision rules, in order:

* A#(0) nilpotent                          -> L-unstable
* A'(0) = diag(-l, 2l, l), l != 0          -> L-stable and T-unstable
* det A#(0) != 0                           -> L-stable
* A#(0) has no real eigenvalues            -> T-stable as well

Anything not covered is reported as undetermined.
"""

from __future__ import annotations

import json
import logging
import math
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .actions import AutoFamily, FamilyError, a_sharp, is_nilpotent, verify_heisenberg_relations
from .config import RunConfig, build_family, build_fields
from .ergodic import (DriftExit, birkhoff_table, box_discrepancy, monomials,
                      nilflow_samples, parallel_residual, tau_ab, GOLDEN_C)
from .heis import E1, E3
from .holonomy import (HorizontalSubalgebra, OrbitExit, check_pseudogroup_relations, default_grid,
                       holonomy_maps, is_abelian_leaf, is_compact_leaf, translation_number)
from .nilmanifold import MPoint, NilPoint

log = logging.getLogger(__name__)

TOL = 1e-9

L_STABLE, L_UNSTABLE = "L-stable", "L-unstable"
T_STABLE, T_UNSTABLE = "T-stable", "T-unstable"
UNDETERMINED = "undetermined"


@dataclass
class StabilityVerdict:
    l_status: str
    t_status: str
    evidence: list
    eigen_data: dict

    def as_dict(self):
        return {"l_status": self.l_status, "t_status": self.t_status,
                "evidence": list(self.evidence), "eigen_data": self.eigen_data}

    def to_json(self, **kw) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, **kw)


def wedge_sign(Asharp, n_dirs: int = 360) -> str:
    """Sign of (A u) ^ u = (Au)_1 u_2 - (Au)_2 u_1 over unit directions u.

    Directions are theta_k = 2 pi k / n_dirs plus the two extremal directions
    of the quadratic form, so a definite form is never misjudged by sampling.
    """
    if n_dirs < 8:
        raise ValueError("n_dirs must be at least 8")
    A = np.asarray(Asharp, dtype=float)
    (a, b), (c, d) = A
    Q = np.array([[-c, 0.5 * (a - d)], [0.5 * (a - d), b]])
    th = 2 * np.pi * np.arange(n_dirs) / n_dirs
    U = np.vstack([np.column_stack([np.cos(th), np.sin(th)]), np.linalg.eigh(Q)[1].T])
    AU = U @ A.T
    vals = AU[:, 0] * U[:, 1] - AU[:, 1] * U[:, 0]
    if np.all(vals > 1e-12):
        return "positive"
    if np.all(vals < -1e-12):
        return "negative"
    return "mixed"


def _is_thm2_form(D, tol=TOL):
    lam = D[2, 2]
    target = np.diag([-lam, 2 * lam, lam])
    return abs(lam) > tol and bool(np.max(np.abs(D - target)) < tol), float(lam)


def classify(F: AutoFamily) -> StabilityVerdict:
    """Apply the decision table to A#(0) and A'(0).

    A#(0) = 0 (e.g. the constant family) is nilpotent, so it is classified
    L-unstable like any other nilpotent A#(0).
    """
    A0 = np.asarray(F(0.0), dtype=float)
    if not np.allclose(A0, np.eye(3), atol=1e-12, rtol=0):
        raise FamilyError("classification needs A(0) = I")
    D = np.asarray(F.derivative(0.0), dtype=float)
    S = a_sharp(F, 0.0)
    tr, det = float(np.trace(S)), float(np.linalg.det(S))
    disc = tr * tr - 4 * det
    nil = is_nilpotent(S, TOL)
    thm2, lam = _is_thm2_form(D)
    eig = np.linalg.eigvals(S)
    eigen_data = {
        "a_sharp": S.tolist(),
        "eigenvalues": [[float(e.real), float(e.imag)] for e in sorted(eig, key=lambda e: (e.real, e.imag))],
        "trace": tr, "det": det, "discriminant": disc,
        "nilpotent": nil, "wedge_sign": wedge_sign(S),
    }
    l_status, t_status, evidence = UNDETERMINED, UNDETERMINED, []
    if nil:
        l_status = L_UNSTABLE
        evidence.append("nilpotent: A#(0) is nilpotent")
    if thm2:
        l_status, t_status = L_STABLE, T_UNSTABLE
        evidence.append(f"mixed-form: A'(0) = diag(-l, 2l, l) with l = {lam:g}")
    if abs(det) > TOL:
        l_status = L_STABLE
        evidence.append("determinant: det A#(0) != 0")
        if disc < -TOL:
            t_status = T_STABLE
            evidence.append("no-real-eigenvalues: A#(0) has no real eigenvalues")
    return StabilityVerdict(l_status, t_status, evidence, eigen_data)


# -- experiments -------------------------------------------------------------

@dataclass
class ExperimentReport:
    scenario: str
    config: dict
    verdict: dict | None = None
    relations: dict | None = None
    holonomy: dict | None = None
    leaves: dict | None = None
    translation_number: dict | None = None
    tau: dict | None = None
    discrepancy: dict | None = None
    failures: dict = field(default_factory=dict)
    maps: object = field(default=None, repr=False)
    drift: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return not self.failures

    def as_dict(self):
        keys = ("scenario", "config", "verdict", "relations", "holonomy", "leaves",
                "translation_number", "tau", "discrepancy", "failures")
        return {k: getattr(self, k) for k in keys}

    def to_json(self, **kw) -> str:
        return json.dumps(jsonable(self.as_dict()), sort_keys=True, **kw)

    def summary_rows(self):
        """Flat (section, key, value) rows for the CSV summary."""
        rows = []

        def walk(prefix, obj):
            if isinstance(obj, dict):
                for k in sorted(obj):
                    walk(f"{prefix}.{k}" if prefix else str(k), obj[k])
            elif isinstance(obj, (list, tuple)) and obj and not isinstance(obj[0], (list, tuple, dict)):
                rows.append((prefix, ";".join(_fmt(x) for x in obj)))
            elif not isinstance(obj, (list, tuple)):
                rows.append((prefix, _fmt(obj)))

        d = jsonable(self.as_dict())
        for section in ("verdict", "relations", "holonomy", "leaves", "translation_number", "tau",
                        "discrepancy", "failures"):
            if d.get(section) is not None:
                walk(section, d[section])
        return rows


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def jsonable(obj):
    # JSON-safe copy: numpy scalars to Python, non-finite floats to strings
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _guard(report, name, fn):
    try:
        return fn()
    except Exception as exc:    # recorded in the report's failure section
        report.failures[name] = f"{type(exc).__name__}: {exc}"
        log.debug("%s failed\n%s", name, traceback.format_exc())
        return None


def tau_entry(fields, p0, v, cfg):
    try:
        r = tau_ab(fields, p0, v, cfg.horizon, cfg.tau_dt)
        return {"v": list(map(float, v)), **r.as_dict()}, r
    except DriftExit as exc:
        return {"v": list(map(float, v)), "exit_time": exc.exit_time, **exc.report.as_dict(),
                "partial": True}, exc.report


def run_experiment(cfg: RunConfig) -> ExperimentReport:
    """Classify the family, then build the perturbed action and collect its witnesses.

    Independent pieces (holonomy, the tau_Ab estimates, the discrepancy test)
    run on up to ``cfg.jobs`` threads and are joined in a fixed order.
    Component errors land in ``report.failures`` instead of propagating.
    """
    cfg = cfg.validate()
    # out_dir and jobs do not change results; leaving them out keeps reruns byte-identical
    echo = {k: v for k, v in cfg.as_dict().items() if k not in ("out_dir", "jobs")}
    report = ExperimentReport(cfg.scenario, echo)
    F = build_family(cfg)
    report.verdict = classify(F).as_dict()
    fields = build_fields(cfg, F)
    report.relations = _guard(report, "relations", lambda: verify_heisenberg_relations(
        fields, cfg.relation_samples, cfg.relation_tol, seed=cfg.seed).as_dict())

    p0 = MPoint(NilPoint(0.0, 0.0, 0.0), 0.0)

    def holonomy_part():
        maps = holonomy_maps(fields, default_grid(cfg.eps, cfg.grid), dt=cfg.dt)
        pg = check_pseudogroup_relations(maps, cfg.pseudogroup_tol)
        return maps, pg

    def e3_part():
        return tau_entry(fields, p0, E3, cfg)

    def disc_part():
        rng = np.random.default_rng(cfg.seed)
        pts = nilflow_samples((1.0, math.sqrt(2.0), 0.0), rng.random(3), cfg.discrepancy_t)
        return {"v": [1.0, math.sqrt(2.0), 0.0], "T": cfg.discrepancy_t, "boxes": 512,
                "value": box_discrepancy(pts, 8)}

    tasks = {"holonomy": holonomy_part, "tau_e3": e3_part}
    if cfg.discrepancy:
        tasks["discrepancy"] = disc_part
    with ThreadPoolExecutor(max_workers=cfg.jobs) as ex:
        futures = {k: ex.submit(_guard, report, k, fn) for k, fn in tasks.items()}
        results = {k: futures[k].result() for k in tasks}

    hol = results["holonomy"]
    a = None
    if hol is not None:
        maps, pg = hol
        report.maps = maps
        report.holonomy = {"grid": int(maps.grid.size), "distance_from_identity": maps.distance_from_identity,
                           "near_identity": maps.near_identity, "f_at_0": [maps.apply(i, 0.0) for i in (1, 2, 3)],
                           "pseudogroup": pg.as_dict()}
        report.leaves = {"z0": 0.0, "compact": is_compact_leaf(maps, 0.0, cfg.leaf_tol),
                         "abelian": is_abelian_leaf(maps, 0.0, cfg.leaf_tol)}

        def tn():
            try:
                val = translation_number(maps, 0.0, cfg.translation_n)
                return {"z0": 0.0, "n": cfg.translation_n, "value": val, "defined": val is not None}
            except OrbitExit as exc:
                return {"z0": 0.0, "n": exc.m, "value": exc.estimate, "defined": exc.estimate is not None,
                        "orbit_exit": str(exc)}

        report.translation_number = _guard(report, "translation_number", tn)
        if report.translation_number is not None:
            a = report.translation_number["value"]

    # horizontal generator: (-a, 1, 0) spans the horizontal directions when a is known
    v_h = HorizontalSubalgebra(a).horizontal_generator if a is not None else tuple(E1)
    h_entry = _guard(report, "tau_horizontal", lambda: tau_entry(fields, p0, v_h, cfg))
    e3 = results["tau_e3"]
    if e3 is not None or h_entry is not None:
        report.tau = {}
        if e3 is not None:
            report.tau["E3"] = e3[0]
            report.drift["E3"] = e3[1]
        if h_entry is not None:
            report.tau["horizontal"] = h_entry[0]
            report.drift["horizontal"] = h_entry[1]
        if e3 is not None and h_entry is not None:
            report.tau["parallel_residual"] = parallel_residual(e3[1].value, h_entry[1].value)
            report.tau["parallel"] = report.tau["parallel_residual"] < 1e-2
    if cfg.discrepancy:
        report.discrepancy = results.get("discrepancy")
    return report


def ergodic_rows(cfg: RunConfig, k: int = 3):
    """Rows (test, parameter, size, value, passed) for the Birkhoff and nilflow checks."""
    from .ergodic import birkhoff_avg, birkhoff_closed_form

    rng = np.random.default_rng(cfg.seed)
    starts = rng.random((cfg.birkhoff_starts, 2))
    fs = monomials(k)
    table = birkhoff_table(fs, GOLDEN_C, starts, cfg.birkhoff_n, cfg.jobs)
    rows = []
    for f, vals in zip(fs, table):
        v = float(np.max(vals))
        rows.append(("birkhoff_sup", f"n={f.n};m={f.m}", cfg.birkhoff_n, v, v < 0.05))
    p = tuple(starts[0])
    for n in (1, 2, 3, -1, -2, -3):
        for N in (10, 100, 1000, 10_000):
            r = abs(birkhoff_avg((n, 0), GOLDEN_C, p, N) - birkhoff_closed_form(n, GOLDEN_C, p, N))
            rows.append(("closed_form_residual", f"n={n};m=0", N, float(r), r < 1e-10))
    if cfg.discrepancy:
        pts = nilflow_samples((1.0, math.sqrt(2.0), 0.0), rng.random(3), cfg.discrepancy_t)
        d = box_discrepancy(pts, 8)
        rows.append(("nilflow_discrepancy", "v=(1;sqrt2;0);boxes=512", cfg.discrepancy_t, d, d < 0.05))
    return rows
