"""Numerical lab for locally free Heisenberg-group actions on G/H x (-eps, eps)."""

from .heis import AlgebraVec, GroupElem, E1, E2, E3, IDENTITY, alg_exp, alg_log, mul, inv
from .nilmanifold import MPoint, NilPoint, canonicalize, quotient_dist
from .actions import (ActionFields, AutoFamily, FamilyError, fields_from_family, identity_family,
                      linear_family, mixed_family, perturb_mixed, perturb_nilpotent,
                      verify_heisenberg_relations)
from .holonomy import HolonomyMaps, holonomy_maps, translation_number
from .stability import StabilityVerdict, classify, run_experiment, wedge_sign

__version__ = "0.1.0"
