"""Run configuration: INI files with [family], [perturbation], [numerics], [output] sections.

Canned scenarios ship as INI files in ``nilstab/scenarios``.  Any key can be
overridden from the command line after loading.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from .actions import (ActionFields, AutoFamily, Bump, FamilyError, fields_from_family, identity_family,
                      linear_family, mixed_family, perturb_mixed, perturb_nilpotent, polynomial_family)

SCENARIOS = ("identity", "thm1", "thm2", "rotation")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class FamilySpec:
    kind: str = "identity"                # identity | linear | mixed | polynomial
    B: tuple = ()                         # linear: 2x2 or 3x3 rows
    lam: float = 0.0                      # mixed
    coeffs: dict = field(default_factory=dict)  # polynomial: entry -> [c1, c2, ...]


@dataclass(frozen=True)
class PerturbationConfig:
    kind: str = "none"                    # none | nilpotent | mixed
    lam: float = 0.0
    c: float = 0.0
    amplitude: float = 0.05
    support: float = 0.2


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "custom"
    family: FamilySpec = FamilySpec()
    perturbation: PerturbationConfig = PerturbationConfig()
    eps: float = 1.0
    dt: float = 1e-3
    horizon: float = 10.0                 # tau_Ab averaging time
    tau_dt: float = 1e-2
    birkhoff_n: int = 100_000
    birkhoff_starts: int = 20
    grid: int = 401
    translation_n: int = 10_000
    discrepancy: bool = False
    discrepancy_t: int = 100_000
    relation_samples: int = 100
    relation_tol: float = 1e-6
    pseudogroup_tol: float = 1e-5
    leaf_tol: float = 1e-9
    seed: int = 0
    jobs: int = 1
    out_dir: str = "out"

    def validate(self) -> "RunConfig":
        for name in ("relation_tol", "pseudogroup_tol", "leaf_tol", "eps", "dt", "horizon", "tau_dt"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.dt < 0.1 or not self.tau_dt < 0.1:
            raise ConfigError("dt must be below 0.1")
        if self.seed is None:
            raise ConfigError("a seed is required")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.grid < 3:
            raise ConfigError("grid needs at least 3 points")
        return self

    def override(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw).validate()

    def as_dict(self):
        return asdict(self)


# -- parsing -----------------------------------------------------------------

_NUMERIC = {"eps": float, "dt": float, "horizon": float, "tau_dt": float, "birkhoff_n": int,
            "birkhoff_starts": int, "grid": int, "translation_n": int, "discrepancy_t": int,
            "relation_samples": int, "relation_tol": float, "pseudogroup_tol": float,
            "leaf_tol": float, "seed": int, "jobs": int}


def _matrix(text):
    try:
        rows = json.loads(text)
        M = np.asarray(rows, dtype=float)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"cannot parse matrix {text!r}") from exc
    if M.shape not in ((2, 2), (3, 3)):
        raise ConfigError(f"matrix must be 2x2 or 3x3, got shape {M.shape}")
    return tuple(tuple(float(x) for x in r) for r in M)


def parse_config(text: str, name: str = "custom") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    try:
        fam = cp["family"] if cp.has_section("family") else {}
        kind = fam.get("type", "identity").strip()
        if kind not in ("identity", "linear", "mixed", "polynomial"):
            raise ConfigError(f"unknown family type {kind!r}")
        coeffs = {}
        for k in ("a11", "a12", "a21", "a22", "a31", "a32"):
            if k in fam:
                coeffs[k] = [float(x) for x in json.loads(fam[k])]
        family = FamilySpec(kind, _matrix(fam["B"]) if "B" in fam else (), float(fam.get("lam", 0.0)), coeffs)

        pert = cp["perturbation"] if cp.has_section("perturbation") else {}
        pkind = pert.get("type", "none").strip()
        if pkind not in ("none", "nilpotent", "mixed"):
            raise ConfigError(f"unknown perturbation type {pkind!r}")
        perturbation = PerturbationConfig(pkind, float(pert.get("lam", 0.0)), float(pert.get("c", 0.0)),
                                          float(pert.get("amplitude", 0.05)), float(pert.get("support", 0.2)))

        kw = {}
        num = cp["numerics"] if cp.has_section("numerics") else {}
        for k, conv in _NUMERIC.items():
            if k in num:
                kw[k] = conv(float(num[k])) if conv is int else conv(num[k])
        if "discrepancy" in num:
            kw["discrepancy"] = cp.getboolean("numerics", "discrepancy")
        if cp.has_section("output") and "out_dir" in cp["output"]:
            kw["out_dir"] = cp["output"]["out_dir"]
        scenario = cp["scenario"].get("name", name) if cp.has_section("scenario") else name
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    return RunConfig(scenario, family, perturbation, **kw).validate()


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), name=str(path))


def load_scenario(name: str) -> RunConfig:
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    text = resources.files("nilstab").joinpath("scenarios", f"{name}.ini").read_text()
    return parse_config(text, name=name)


# -- building the objects ----------------------------------------------------

def build_family(cfg: RunConfig) -> AutoFamily:
    """The unperturbed family z -> A(z); raises FamilyError when it is not valid."""
    f = cfg.family
    if f.kind == "identity":
        return identity_family(cfg.eps)
    if f.kind == "linear":
        if not f.B:
            raise FamilyError("linear family needs B")
        return linear_family(np.asarray(f.B, dtype=float), cfg.eps)
    if f.kind == "mixed":
        if f.lam == 0:
            raise FamilyError("mixed family needs lambda != 0")
        return mixed_family(f.lam, cfg.eps)
    if f.kind == "polynomial":
        return polynomial_family(f.coeffs, cfg.eps)
    raise FamilyError(f"unknown family type {f.kind!r}")


def build_fields(cfg: RunConfig, F: AutoFamily | None = None) -> ActionFields:
    F = build_family(cfg) if F is None else F
    p = cfg.perturbation
    if p.kind == "none":
        return fields_from_family(F)
    if p.kind == "nilpotent":
        return perturb_nilpotent(F, bump=Bump(p.amplitude, p.support))
    if p.kind == "mixed":
        return perturb_mixed(p.lam, p.c, cfg.eps)
    raise FamilyError(f"unknown perturbation type {p.kind!r}")
