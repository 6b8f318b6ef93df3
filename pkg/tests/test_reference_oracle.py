import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg
from hypothesis import given, settings, strategies as st

from dissipode.errors import ToleranceUnreachable
from dissipode.ode_model import make_problem
from dissipode.random_problems import random_dissipative_problem
from dissipode.reference_oracle import (
    decay_profile,
    default_tol,
    duhamel_integral,
    exact_history,
    flow,
    propagator,
    solution_at,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)


def _ivp_reference(problem, t0, t1, u):
    """Independent check: scipy's DOP853 on the real-ified system."""
    N = problem.dim

    def rhs(t, y):
        z = y[:N] + 1j * y[N:]
        dz = problem.A_at(t) @ z + problem.b_at(t)
        return np.concatenate([dz.real, dz.imag])

    y0 = np.concatenate([np.real(u), np.imag(u)])
    sol = scipy.integrate.solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=1e-13, atol=1e-14)
    return sol.y[:N, -1] + 1j * sol.y[N:, -1]


def test_constant_identity_decay():
    p = make_problem(-np.eye(2), [1, 0], 1.0)
    assert np.allclose(propagator(p, 0.0, 1.0), math.exp(-1) * np.eye(2), atol=1e-12)


def test_scalar_linear_rate():
    p = make_problem(lambda t: -(1 + t) * np.eye(1), [1.0], 1.0)
    U, err = propagator(p, 0.0, 1.0, full_output=True)
    assert U[0, 0] == pytest.approx(math.exp(-1.5), abs=1e-10)
    assert err <= 1e-10


def test_rotating_damped_closed_form():
    p = make_problem(-1j * SX - np.eye(2), [1, 0], 1.0)
    closed = math.exp(-1) * (math.cos(1) * np.eye(2) - 1j * math.sin(1) * SX)
    assert np.allclose(propagator(p, 0.0, 1.0, 1e-12), closed, atol=1e-12)
    assert np.allclose(propagator(p, 0.0, 1.0), scipy.linalg.expm(-1j * SX - np.eye(2)), atol=1e-10)


def test_duhamel_zero_source():
    p = make_problem(-np.eye(2), [1, 0], 1.0)
    assert not np.any(duhamel_integral(p, 0, 0.5))


@pytest.mark.parametrize("h", [0.1, 0.5, 1.0])
def test_duhamel_constant_source(h):
    p = make_problem(-np.eye(1), [1.0], 1.0, b=[1.0])
    assert duhamel_integral(p, 0, h)[0] == pytest.approx(1 - math.exp(-h), abs=1e-11)


def test_duhamel_linear_source():
    p = make_problem(-np.eye(1), [1.0], 1.0, b=lambda t: [t])
    # e^{-1} * int_0^1 s e^s ds = e^{-1}
    assert duhamel_integral(p, 0, 1.0)[0] == pytest.approx(math.exp(-1), abs=1e-11)


def test_exact_history_scalar():
    p = make_problem(-np.eye(1), [1.0], 1.0)
    hist = exact_history(p, 2, 0.5)
    assert np.allclose(hist.blocks[:, 0], [1, math.exp(-0.5), math.exp(-1)], atol=1e-12)


def test_exact_history_steady_state():
    eta = 0.7
    u0 = np.array([1.0, -2.0])
    p = make_problem(-eta * np.eye(2), u0, 3.0, b=eta * u0)
    hist = exact_history(p, 6, 0.5)
    assert np.allclose(hist.blocks, u0, atol=1e-11)


def test_exact_history_single_step_matches_flow():
    rng = np.random.default_rng(3)
    p = random_dissipative_problem(rng, N=3)
    f = flow(p, 0.0, p.T)
    hist = exact_history(p, 1, p.T)
    assert np.allclose(hist.blocks[1], f.U @ p.u0 + f.w, atol=1e-12)
    with pytest.raises(ValueError):
        exact_history(p, 2, p.T)


def test_matches_independent_integrator():
    rng = np.random.default_rng(11)
    for _ in range(3):
        p = random_dissipative_problem(rng, N=3)
        u = solution_at(p, [p.T], 1e-12)[0]
        assert np.allclose(u, _ivp_reference(p, 0.0, p.T, p.u0), atol=1e-9)


def test_tolerance_floor():
    p = make_problem(-np.eye(1), [1.0], 1.0)
    with pytest.raises(ToleranceUnreachable):
        propagator(p, 0.0, 1.0, tol=1e-15)


def test_default_tol():
    assert default_tol() == 1e-10
    assert default_tol(1e-3) == 1e-10
    assert default_tol(1e-9) == pytest.approx(1e-11)
    assert default_tol(1e-20) == 1e-13


def test_decay_profile_steady_and_decaying():
    assert decay_profile(make_problem(-np.eye(1), [1.0], 2.0, b=[1.0])) == pytest.approx((1.0, 1.0))
    mx, fin = decay_profile(make_problem(-np.eye(1), [1.0], 2.0))
    assert mx == pytest.approx(1.0) and fin == pytest.approx(math.exp(-2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 100_000))
def test_stability_and_semigroup(seed):
    rng = np.random.default_rng(seed)
    p = random_dissipative_problem(rng)
    t0, t1, t2 = np.sort(rng.uniform(0, p.T, 3))
    tol = 1e-11
    U01, U12, U02 = (propagator(p, a, b, tol) for a, b in ((t0, t1), (t1, t2), (t0, t2)))
    s = np.linalg.svd(U02, compute_uv=False)
    assert s[0] <= math.exp(-p.eta * (t2 - t0)) + 10 * tol
    assert s[-1] >= math.exp(-p.alpha_A * (t2 - t0)) - 10 * tol
    assert np.linalg.norm(U02 - U12 @ U01, 2) <= 10 * tol


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 100_000))
def test_homogeneous_norm_monotone(seed):
    p = random_dissipative_problem(np.random.default_rng(seed), inhomogeneous=False)
    norms = exact_history(p, 8, p.T / 8).norms
    assert np.all(np.diff(norms) <= 1e-10)
