"""Seeded random dissipative problems with smooth time dependence."""

from __future__ import annotations

import numpy as np

from .ode_model import DissipativeOdeProblem, make_problem


def random_hermitian(rng: np.random.Generator, N: int, scale: float = 1.0) -> np.ndarray:
    G = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    H = (G + G.conj().T) / 2
    return scale * H / np.linalg.norm(H, 2)


def random_matrix(rng: np.random.Generator, N: int, scale: float = 1.0) -> np.ndarray:
    G = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
    return scale * G / np.linalg.norm(G, 2)


def random_dissipative_problem(
    rng: np.random.Generator,
    N: int | None = None,
    T: float | None = None,
    inhomogeneous: bool = True,
    time_dependent: bool = True,
    eta: float | None = None,
) -> DissipativeOdeProblem:
    """``A(t) = -(eta I + P(t) P(t)^†) + i (S0 + cos(w t) S1)`` with ``P(t) = P0 + sin(w t) P1``.

    The Hermitian part is at most ``-eta`` by construction, so the declared
    ``eta`` is a valid margin. ``alpha_A`` is the triangle-inequality cap
    ``eta + (|P0| + |P1|)^2 + |S0| + |S1|``; every entry is smooth in ``t``.
    """
    N = int(rng.integers(1, 5)) if N is None else N
    T = float(rng.uniform(0.5, 2.0)) if T is None else float(T)
    eta = float(rng.uniform(0.3, 1.0)) if eta is None else float(eta)
    w = float(rng.uniform(0.5, 2.0)) if time_dependent else 0.0
    tscale = 1.0 if time_dependent else 0.0
    p0, p1 = rng.uniform(0.2, 0.6), rng.uniform(0.1, 0.4) * tscale
    s0, s1 = rng.uniform(0.1, 0.6), rng.uniform(0.1, 0.4) * tscale
    P0, P1 = random_matrix(rng, N, p0), random_matrix(rng, N, p1)
    S0, S1 = random_hermitian(rng, N, s0), random_hermitian(rng, N, s1)
    eye = np.eye(N)

    def A(t):
        P = P0 + np.sin(w * t) * P1
        return -(eta * eye + P @ P.conj().T) + 1j * (S0 + np.cos(w * t) * S1)

    alpha_A = eta + (p0 + p1) ** 2 + s0 + s1
    u0 = rng.normal(size=N) + 1j * rng.normal(size=N)
    b, alpha_b = None, 0.0
    if inhomogeneous:
        b0 = rng.normal(size=N) + 1j * rng.normal(size=N)
        b1 = (rng.normal(size=N) + 1j * rng.normal(size=N)) * tscale
        b0 *= 0.5 / np.linalg.norm(b0)
        if time_dependent:
            b1 *= 0.5 / np.linalg.norm(b1)

        def b(t):
            return b0 + np.sin(w * t) * b1

        alpha_b = float(np.linalg.norm(b0) + np.linalg.norm(b1))
    if time_dependent:
        return make_problem(A, u0, T, b, eta=eta, alpha_A=alpha_A, alpha_b=alpha_b, name="random")
    return make_problem(A(0.0), u0, T, None if b is None else b(0.0), eta=eta, alpha_A=alpha_A,
                        alpha_b=alpha_b, name="random")
