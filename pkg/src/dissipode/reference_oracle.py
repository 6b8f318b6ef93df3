"""Classical ground truth for time-ordered propagators and Duhamel integrals.

Everything here integrates the augmented flow ``Y' = A(t) Y + [0 | b(t)]``
with ``Y(t0) = [I | 0]`` by classical fourth-order Runge-Kutta, doubling the
step count until two successive refinements agree to ``tol / 4`` in operator
norm, and returns the Richardson-extrapolated result. The first ``N`` columns
of ``Y(t1)`` are the propagator, the last column is the Duhamel integral
``∫ U(s, t1) b(s) ds``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

from .errors import ToleranceUnreachable
from .ode_model import DissipativeOdeProblem
from .solution import SolutionBundle

MIN_TOL = 1e-13
MAX_STEPS = 2**20


def default_tol(eps: float | None = None) -> float:
    """Oracle tolerance for comparisons at target accuracy ``eps``."""
    if eps is None:
        return 1e-10
    return max(MIN_TOL, min(1e-10, eps / 100))


@dataclass(frozen=True)
class Flow:
    U: np.ndarray
    w: np.ndarray
    error: float


def _pieces(problem: DissipativeOdeProblem, t0: float, t1: float) -> list[tuple[float, float]]:
    cuts = [t0] + [s for s in problem.breakpoints if t0 < s < t1] + [t1]
    return list(zip(cuts[:-1], cuts[1:]))


def _rk4_autonomous(A, b, span, n):
    N = A.shape[0]
    gen = np.zeros((N + 1, N + 1), dtype=complex)
    gen[:N, :N] = A
    if b is not None:
        gen[:N, N] = b
    hg = (span / n) * gen
    hg2 = hg @ hg
    step = np.eye(N + 1) + hg + hg2 / 2 + hg2 @ hg / 6 + hg2 @ hg2 / 24
    Y = np.linalg.matrix_power(step, n)
    return Y[:N, :N], Y[:N, N]


class _Sampler:
    """Caches A(t), b(t) on dyadic nodes of one piece so refinements reuse evaluations."""

    def __init__(self, problem, a, b):
        self.problem = problem
        self.a, self.b = a, b
        self.hi = np.nextafter(b, a)  # stay on this piece's side of a jump
        self.cache = {}

    def __call__(self, num: int, den: int):
        g = gcd(num, den)
        key = (num // g, den // g)
        hit = self.cache.get(key)
        if hit is None:
            t = self.a + (self.b - self.a) * key[0] / key[1]
            t = min(max(t, self.a), self.hi)
            hit = (self.problem.A_at(t), self.problem.b_at(t) if not self.problem.homogeneous else None)
            self.cache[key] = hit
        return hit


def _rk4_general(sample: _Sampler, span: float, n: int, N: int, with_source: bool):
    h = span / n
    width = N + 1 if with_source else N
    Y = np.zeros((N, width), dtype=complex)
    Y[:, :N] = np.eye(N)

    def rhs(Ab, Y):
        A, b = Ab
        Z = A @ Y
        if with_source:
            Z[:, N] += b
        return Z

    for k in range(n):
        s0 = sample(2 * k, 2 * n)
        sm = sample(2 * k + 1, 2 * n)
        s1 = sample(2 * k + 2, 2 * n)
        k1 = rhs(s0, Y)
        k2 = rhs(sm, Y + 0.5 * h * k1)
        k3 = rhs(sm, Y + 0.5 * h * k2)
        k4 = rhs(s1, Y + h * k3)
        Y = Y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    U = Y[:, :N]
    w = Y[:, N] if with_source else np.zeros(N, dtype=complex)
    return U, w


def _piece_flow(problem: DissipativeOdeProblem, a: float, b: float, tol: float) -> Flow:
    N = problem.dim
    span = b - a
    with_source = not problem.homogeneous
    n = max(1, int(np.ceil(4 * span * problem.alpha_A)))
    if problem.time_independent:
        A0 = problem.A_at(a)
        b0 = problem.b_at(a) if with_source else None

        def run(n):
            return _rk4_autonomous(A0, b0, span, n)
    else:
        sampler = _Sampler(problem, a, b)

        def run(n):
            return _rk4_general(sampler, span, n, N, with_source)

    U_c, w_c = run(n)
    last_diff = np.inf
    while True:
        if 2 * n > MAX_STEPS:
            raise ToleranceUnreachable(f"refinement floor hit at {n} steps on [{a}, {b}]")
        U_f, w_f = run(2 * n)
        dU, dw = U_f - U_c, w_f - w_c
        diff = max(np.linalg.norm(dU, 2), np.linalg.norm(dw))
        if diff <= tol / 4:
            return Flow(U_f + dU / 15, w_f + dw / 15, diff / 15)
        if diff > 0.5 * last_diff and diff < 1e-9:
            raise ToleranceUnreachable(
                f"refinement stalled at {diff:.2e} (roundoff) before reaching tol {tol:.1e}")
        last_diff = diff
        U_c, w_c, n = U_f, w_f, 2 * n


def flow(problem: DissipativeOdeProblem, t0: float, t1: float, tol: float = 1e-10) -> Flow:
    """Propagator and Duhamel integral over ``[t0, t1]`` with an a-posteriori error estimate."""
    if tol < MIN_TOL:
        raise ToleranceUnreachable(f"tol {tol:.1e} is below the supported floor {MIN_TOL:.0e}")
    if t1 < t0:
        raise ValueError("need t0 <= t1")
    N = problem.dim
    U = np.eye(N, dtype=complex)
    w = np.zeros(N, dtype=complex)
    err = 0.0
    if t1 == t0:
        return Flow(U, w, 0.0)
    pieces = _pieces(problem, t0, t1)
    for a, b in pieces:
        f = _piece_flow(problem, a, b, tol / len(pieces))
        U = f.U @ U
        w = f.U @ w + f.w
        err += f.error
    return Flow(U, w, err)


def propagator(problem: DissipativeOdeProblem, t0: float, t1: float, tol: float = 1e-10,
               full_output: bool = False):
    """Time-ordered exponential ``T exp(∫_{t0}^{t1} A(s) ds)``.

    With ``full_output=True`` returns ``(U, error_estimate)``.
    """
    f = flow(problem, t0, t1, tol)
    return (f.U, f.error) if full_output else f.U


def duhamel_integral(problem: DissipativeOdeProblem, j: int, h: float, tol: float = 1e-10) -> np.ndarray:
    """``∫_{jh}^{(j+1)h} U(s, (j+1)h) b(s) ds``."""
    if problem.homogeneous:
        return np.zeros(problem.dim, dtype=complex)
    return flow(problem, j * h, (j + 1) * h, tol).w


def exact_history(problem: DissipativeOdeProblem, M: int, h: float, tol: float = 1e-10) -> SolutionBundle:
    """Exact solution ``u(kh)`` for ``k = 0..M`` chained step by step."""
    if abs(M * h - problem.T) > 1e-12 * max(1.0, problem.T):
        raise ValueError(f"M*h = {M * h} does not match T = {problem.T}")
    blocks = np.empty((M + 1, problem.dim), dtype=complex)
    blocks[0] = problem.u0
    for j in range(M):
        f = flow(problem, j * h, (j + 1) * h, tol)
        blocks[j + 1] = f.U @ blocks[j] + f.w
    return SolutionBundle(blocks, h=h, M=M, Mp=1)


def solution_at(problem: DissipativeOdeProblem, times, tol: float = 1e-10) -> np.ndarray:
    """Exact ``u(t)`` at the given increasing times (rows of the result)."""
    times = np.asarray(times, dtype=float)
    out = np.empty((times.size, problem.dim), dtype=complex)
    u, t_prev = problem.u0.copy(), 0.0
    for i, t in enumerate(times):
        f = flow(problem, t_prev, float(t), tol)
        u = f.U @ u + f.w
        out[i], t_prev = u, float(t)
    return out


def decay_profile(problem: DissipativeOdeProblem, points: int = 64, tol: float = 1e-10):
    """``(max_t ||u(t)||, ||u(T)||)`` estimated on a uniform grid of ``points`` intervals."""
    sol = solution_at(problem, np.linspace(0.0, problem.T, points + 1), tol)
    norms = np.linalg.norm(sol, axis=1)
    return float(max(norms.max(), np.linalg.norm(problem.u0))), float(norms[-1])
