import sys

import numpy as np
import pytest

from control_capacity import LtiSystem


def random_stable(rng, n, margin=0.3):
    A = rng.normal(size=(n, n))
    shift = np.max(np.linalg.eigvals(A).real) + margin + rng.uniform(0, 1)
    return A - shift * np.eye(n)


def random_system(rng, n, p, q=None, sigma_nu=0.5, stable=True):
    q = n if q is None else q
    A = random_stable(rng, n) if stable else rng.normal(size=(n, n))
    return LtiSystem(
        A=A,
        B=rng.normal(size=(n, p)),
        C=rng.normal(size=(q, n)),
        G=rng.normal(size=(n, n)),
        sigma_eta=rng.uniform(0.2, 2.0),
        sigma_nu=sigma_nu,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def scalar():
    """A = -1, B = C = G = 1, sigma_eta = 1, no sensor noise."""
    return LtiSystem(A=[[-1.0]], B=[[1.0]], sigma_nu=0.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
