import numpy as np
import pytest

from dissipode.ode_model import make_problem

_ACCEPTANCE: dict = {}


def record_acceptance(number: int, passed: bool, detail: str):
    _ACCEPTANCE[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def scalar_problem(a=-1.0, T=1.0, b=None, u0=1.0, **kw):
    """``u' = a u + b`` with constant coefficients."""
    return make_problem(np.array([[a]]), [u0], T, None if b is None else np.array([b]), **kw)


@pytest.fixture
def scalar():
    return scalar_problem
