import time

import numpy as np
import pytest
from hypothesis import settings

from nilstab.actions import Bump, linear_family, perturb_mixed, perturb_nilpotent
from nilstab.holonomy import holonomy_maps

# fixed example streams keep recorded runs reproducible
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

LAM, C = 0.3, 0.05
NIL_B = [[0.0, 1.0], [0.0, 0.0]]


def mixed_f2(z, lam=LAM, c=C):
    """Closed-form height after lifting gamma_2 in the mixed perturbation: e^{lam z1} = e^{lam z0} - c."""
    return np.log(np.exp(lam * np.asarray(z)) - c) / lam


@pytest.fixture(scope="session")
def thm1_fields():
    return perturb_nilpotent(linear_family(NIL_B), bump=Bump(0.05, 0.2))


@pytest.fixture(scope="session")
def thm2_fields():
    return perturb_mixed(LAM, C)


@pytest.fixture(scope="session")
def thm1_maps(thm1_fields):
    return holonomy_maps(thm1_fields)


@pytest.fixture(scope="session")
def thm2_maps(thm2_fields):
    return holonomy_maps(thm2_fields)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------

_CRITERIA = {}


class _Criterion:
    """Times a block, records PASS/FAIL with a short detail line; failures still raise."""

    def __init__(self, number, title):
        self.number, self.title, self.details = number, title, []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.seconds = time.perf_counter() - self.t0
        status = "PASS" if exc_type is None else "FAIL"
        if exc_type is not None and exc_type is not AssertionError:
            self.details.append(f"{exc_type.__name__}: {exc}")
        _CRITERIA[self.number] = (status, self.title, "; ".join(self.details), self.seconds)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, title, detail, secs = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d} {status}  {title}: {detail} [{secs:.2f} s]")
