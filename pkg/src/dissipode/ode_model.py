"""Dissipative linear ODE problems u' = A(t) u + b(t) and their generators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionGuardExceeded,
    DimensionMismatch,
    NonHermitianEigenFailure,
    NonpositivityViolation,
    NotNegativeDefinite,
)

DENSE_GUARD = 4096
DEFAULT_GRID_POINTS = 129

MatrixFn = Callable[[float], np.ndarray]
VectorFn = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class SampleGrid:
    times: np.ndarray
    purpose: str = "certification"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("sample grid must be a nonempty 1-D array of times")
        if np.any(np.diff(times) <= 0):
            raise ValueError("sample grid times must be strictly increasing")
        if self.purpose not in ("certification", "quadrature"):
            raise ValueError(f"unknown grid purpose {self.purpose!r}")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, T: float, n: int = DEFAULT_GRID_POINTS, purpose: str = "certification"):
        return cls(np.linspace(0.0, T, n), purpose)


@dataclass(frozen=True)
class DissipativeOdeProblem:
    """A linear ODE ``u' = A(t) u + b(t)`` on ``[0, T]`` with ``A + A^† <= -2 eta``.

    ``A`` and ``b`` are callables of time. ``b=None`` means the homogeneous
    problem. ``alpha_A`` and ``alpha_b`` are caps on the norms of ``A(t)`` and
    ``b(t)``; they double as the block-encoding and state-preparation factors.

    ``breakpoints`` lists interior times where ``A`` or ``b`` jump (piecewise
    constant data); the reference oracle integrates across them piece by piece.
    ``diagnostic=True`` marks the non-dissipative control instances (``eta=0``)
    used only for contrast experiments.
    """

    dim: int
    A: MatrixFn
    u0: np.ndarray
    T: float
    eta: float
    alpha_A: float
    alpha_b: float = 0.0
    b: Optional[VectorFn] = None
    breakpoints: tuple = ()
    time_independent: bool = False
    name: str = "custom"
    diagnostic: bool = False
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        u0 = np.asarray(self.u0, dtype=complex).reshape(-1)
        if u0.shape != (self.dim,):
            raise DimensionMismatch(f"u0 has length {u0.size}, expected {self.dim}")
        if not np.any(u0):
            raise ValueError("u0 must be nonzero")
        object.__setattr__(self, "u0", u0)
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.diagnostic:
            if self.eta < 0:
                raise ValueError("eta must be nonnegative")
        elif self.eta <= 0:
            raise ValueError("eta must be positive for a dissipative problem")
        if self.alpha_A <= 0 or self.alpha_b < 0:
            raise ValueError("norm caps must satisfy alpha_A > 0, alpha_b >= 0")

    @property
    def homogeneous(self) -> bool:
        return self.b is None

    def A_at(self, t: float) -> np.ndarray:
        a = np.asarray(self.A(t), dtype=complex)
        if a.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"A({t}) has shape {a.shape}, expected {(self.dim, self.dim)}")
        return a

    def b_at(self, t: float) -> np.ndarray:
        if self.b is None:
            return np.zeros(self.dim, dtype=complex)
        v = np.asarray(self.b(t), dtype=complex).reshape(-1)
        if v.shape != (self.dim,):
            raise DimensionMismatch(f"b({t}) has length {v.size}, expected {self.dim}")
        return v


@dataclass(frozen=True)
class CertificateReport:
    measured_eta: float
    worst_time: float
    passed: bool
    max_norm_A: float = float("nan")
    max_norm_b: float = float("nan")


def log_norm(a: np.ndarray) -> float:
    """Largest eigenvalue of the Hermitian part ``(a + a^†)/2``."""
    try:
        return float(np.linalg.eigvalsh(0.5 * (a + a.conj().T))[-1])
    except np.linalg.LinAlgError as exc:
        raise NonHermitianEigenFailure(str(exc)) from exc


def certify_dissipativity(problem: DissipativeOdeProblem, grid: Optional[SampleGrid] = None) -> CertificateReport:
    """Measure the dissipation margin ``min_t -lambda_max((A+A^†)/2)`` on a grid.

    Passes when the measured margin reaches ``problem.eta`` up to
    ``1e-10 * alpha_A``. Also records the sampled maxima of ``||A||`` and
    ``||b||`` so callers can check the declared caps.
    """
    grid = grid or SampleGrid.uniform(problem.T)
    worst_eta, worst_t = np.inf, float(grid.times[0])
    max_a = max_b = 0.0
    for t in grid.times:
        a = problem.A_at(float(t))
        margin = -log_norm(a)
        if margin < worst_eta:
            worst_eta, worst_t = margin, float(t)
        max_a = max(max_a, float(np.linalg.norm(a, 2)))
        max_b = max(max_b, float(np.linalg.norm(problem.b_at(float(t)))))
    passed = worst_eta >= problem.eta - 1e-10 * problem.alpha_A
    return CertificateReport(float(worst_eta), worst_t, bool(passed), max_a, max_b)


def norm_caps_hold(problem: DissipativeOdeProblem, grid: Optional[SampleGrid] = None, rtol: float = 1e-12) -> bool:
    rep = certify_dissipativity(problem, grid)
    return (rep.max_norm_A <= problem.alpha_A * (1 + rtol)
            and rep.max_norm_b <= problem.alpha_b * (1 + rtol) + 1e-300)


def _as_matrix_fn(m) -> tuple[MatrixFn, bool]:
    if callable(m):
        return m, False
    arr = np.array(m, dtype=complex)
    arr.setflags(write=False)
    return (lambda t: arr), True


def _as_vector_fn(v) -> tuple[Optional[VectorFn], bool]:
    if v is None:
        return None, True
    if callable(v):
        return v, False
    arr = np.array(v, dtype=complex).reshape(-1)
    arr.setflags(write=False)
    return (lambda t: arr), True


def make_problem(
    A,
    u0,
    T: float,
    b=None,
    *,
    eta: Optional[float] = None,
    alpha_A: Optional[float] = None,
    alpha_b: Optional[float] = None,
    grid: Optional[SampleGrid] = None,
    breakpoints: Sequence[float] = (),
    name: str = "custom",
    diagnostic: bool = False,
) -> DissipativeOdeProblem:
    """Build a problem, auto-computing any of ``eta``/``alpha_A``/``alpha_b`` left as None.

    ``A`` and ``b`` may be callables of time or constant arrays. Auto values
    come from the certification grid (129 uniform points by default).
    """
    a_fn, a_const = _as_matrix_fn(A)
    b_fn, b_const = _as_vector_fn(b)
    u0 = np.asarray(u0, dtype=complex).reshape(-1)
    grid = grid or SampleGrid.uniform(T)
    times = grid.times if not a_const else grid.times[:1]
    if eta is None or alpha_A is None:
        margins, norms = [], []
        for t in times:
            a = np.asarray(a_fn(float(t)), dtype=complex)
            margins.append(-log_norm(a))
            norms.append(np.linalg.norm(a, 2))
        if eta is None:
            eta = float(min(margins))
            if diagnostic:
                eta = eta if eta > 0 else 0.0
        if alpha_A is None:
            alpha_A = float(max(norms))
            if diagnostic and alpha_A == 0:
                alpha_A = 1.0  # the zero generator still needs a positive cap
    if alpha_b is None:
        if b_fn is None:
            alpha_b = 0.0
        else:
            bt = grid.times if not b_const else grid.times[:1]
            alpha_b = float(max(np.linalg.norm(np.asarray(b_fn(float(t)), dtype=complex)) for t in bt))
    return DissipativeOdeProblem(
        dim=u0.size, A=a_fn, b=b_fn, u0=u0, T=float(T), eta=float(eta),
        alpha_A=float(alpha_A), alpha_b=float(alpha_b),
        breakpoints=tuple(float(x) for x in breakpoints),
        time_independent=a_const and b_const, name=name, diagnostic=diagnostic,
    )


def make_diagnostic_problem(A, u0, T: float, b=None) -> DissipativeOdeProblem:
    """Non-dissipative control instance (e.g. ``A = 0``); eta is forced to 0.

    Only meant for contrast experiments; bounds that need dissipativity refuse
    these problems.
    """
    return make_problem(A, u0, T, b, eta=0.0, name="diagnostic", diagnostic=True)


# -- heat equation ----------------------------------------------------------

def heat_stencils(n_x: int) -> tuple[np.ndarray, np.ndarray]:
    """One-dimensional second- and centered-difference matrices of size n_x + 1."""
    m = n_x + 1
    lap = n_x**2 * (np.diag(-2.0 * np.ones(m)) + np.eye(m, k=1) + np.eye(m, k=-1))
    grad = 0.5 * n_x * (np.eye(m, k=1) - np.eye(m, k=-1))
    return lap, grad


def kron_sum(op: np.ndarray, d: int) -> np.ndarray:
    """``sum_j I^{j-1} (x) op (x) I^{d-j}``."""
    m = op.shape[0]
    total = np.zeros((m**d, m**d), dtype=op.dtype)
    for j in range(d):
        factors = [np.eye(m)] * d
        factors[j] = op
        term = factors[0]
        for f in factors[1:]:
            term = np.kron(term, f)
        total += term
    return total


def heat_grid_points(d: int, n_x: int) -> np.ndarray:
    axis = np.arange(n_x + 1) / n_x
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def make_heat_problem(
    a: float,
    b_vel: float,
    d: int,
    n_x: int,
    c: Optional[Callable] = None,
    f: Optional[Callable] = None,
    T: float = 1.0,
    u0=None,
    grid: Optional[SampleGrid] = None,
) -> DissipativeOdeProblem:
    """Method-of-lines semi-discretization of ``u_t = a Δu + b_vel ∇·u + c u + f`` on ``[0,1]^d``.

    Each axis carries the ``n_x + 1`` points ``j/n_x`` (``0 <= j <= n_x``) and
    the unknowns are the values at all of them, so the matrix per axis is
    ``(n_x+1) x (n_x+1)``. The Dirichlet data is folded into the stencil by
    truncation: the rows for the first and last point keep only their interior
    neighbour. This is one point per side more than an interior-only scheme
    would use and matches the eigenvalue range ``j = 1..n_x+1`` of the stencil.

    ``c(t, x)`` and ``f(t, x)`` receive ``x`` as an array of shape
    ``(points, d)`` and return one value per point. ``c`` must be nonpositive.
    ``eta`` is set to ``4 a d n_x^2 / (n_x + 2)^2``.
    """
    if a <= 0 or d < 1 or n_x < 1:
        raise ValueError("need a > 0, d >= 1, n_x >= 1")
    dim = (n_x + 1) ** d
    if dim > DENSE_GUARD:
        raise DimensionGuardExceeded(f"(n_x+1)^d = {dim} exceeds the dense guard {DENSE_GUARD}")
    grid = grid or SampleGrid.uniform(T)
    lap1, grad1 = heat_stencils(n_x)
    lap = kron_sum(lap1, d)
    grad = kron_sum(grad1, d)
    points = heat_grid_points(d, n_x)
    static = (a * lap + b_vel * grad).astype(complex)
    static.setflags(write=False)

    sup_c = 0.0
    if c is not None:
        for t in grid.times:
            vals = np.asarray(c(float(t), points), dtype=float).reshape(-1)
            if np.any(vals > 0):
                raise NonpositivityViolation(f"c(t, x) > 0 sampled at t={t}")
            sup_c = max(sup_c, float(np.max(np.abs(vals))) if vals.size else 0.0)

        def A(t, _c=c):
            return static + np.diag(np.asarray(_c(float(t), points), dtype=float).reshape(-1))
    else:
        def A(t):
            return static

    b = None
    alpha_b = 0.0
    if f is not None:
        def b(t, _f=f):
            return np.asarray(_f(float(t), points), dtype=float).reshape(-1).astype(complex)
        alpha_b = max(float(np.linalg.norm(b(float(t)))) for t in grid.times)

    if u0 is None:
        u0 = np.prod(np.sin(np.pi * points), axis=1)
        if not np.any(u0):
            u0 = np.ones(dim)
    elif callable(u0):
        u0 = np.asarray(u0(points)).reshape(-1)

    alpha_A = a * np.linalg.norm(lap, 2) + abs(b_vel) * np.linalg.norm(grad, 2) + sup_c
    eta = 4.0 * a * d * n_x**2 / (n_x + 2) ** 2
    return DissipativeOdeProblem(
        dim=dim, A=A, b=b, u0=u0, T=float(T), eta=eta, alpha_A=float(alpha_A),
        alpha_b=float(alpha_b), time_independent=(c is None and f is None),
        name="heat", metadata={"a": a, "b_vel": b_vel, "d": d, "n_x": n_x},
    )


def heat_dissipation_bound(a: float, d: int, n_x: int) -> float:
    """The matrix bound ``A + A^† <= -8 a d n_x^2 / (n_x+2)^2``, returned as a positive number."""
    return 8.0 * a * d * n_x**2 / (n_x + 2) ** 2


# -- non-Hermitian dynamics -------------------------------------------------

def make_non_hermitian_problem(
    H,
    L,
    u0,
    T: float,
    *,
    eta: Optional[float] = None,
    grid: Optional[SampleGrid] = None,
) -> DissipativeOdeProblem:
    """``i u' = (H + i L) u`` written as ``u' = (-i H + L) u`` with ``L`` negative definite.

    ``H`` and ``L`` are Hermitian matrices or callables returning them. When
    ``eta`` is omitted it is the smallest sampled ``-lambda_max(L(t))``.
    """
    h_fn, h_const = _as_matrix_fn(H)
    l_fn, l_const = _as_matrix_fn(L)
    grid = grid or SampleGrid.uniform(T)
    times = grid.times[:1] if (h_const and l_const) else grid.times
    margins, norms = [], []
    for t in times:
        lt = np.asarray(l_fn(float(t)), dtype=complex)
        ht = np.asarray(h_fn(float(t)), dtype=complex)
        try:
            margins.append(-float(np.linalg.eigvalsh(lt)[-1]))
        except np.linalg.LinAlgError as exc:
            raise NonHermitianEigenFailure(str(exc)) from exc
        norms.append(np.linalg.norm(-1j * ht + lt, 2))
    measured = min(margins)
    if eta is None:
        eta = measured
    if measured <= 0 or measured < eta - 1e-12 * max(1.0, eta):
        raise NotNegativeDefinite(f"lambda_max(L) = {-measured:.3e} is not <= -eta = {-eta:.3e}")

    def A(t):
        return -1j * np.asarray(h_fn(t), dtype=complex) + np.asarray(l_fn(t), dtype=complex)

    return DissipativeOdeProblem(
        dim=np.asarray(u0).size, A=A, u0=u0, T=float(T), eta=float(eta),
        alpha_A=float(max(norms)), time_independent=h_const and l_const,
        name="non_hermitian",
    )


def make_piecewise_problem(
    times: Sequence[float],
    A_list: Sequence,
    u0,
    b_list: Optional[Sequence] = None,
    **kwargs,
) -> DissipativeOdeProblem:
    """Piecewise-constant ``A`` (and ``b``): ``A(t) = A_list[k]`` on ``[times[k], times[k+1])``."""
    times = np.asarray(times, dtype=float)
    mats = [np.array(m, dtype=complex) for m in A_list]
    if len(mats) != len(times) - 1:
        raise DimensionMismatch("need exactly one matrix per time interval")
    vecs = None if b_list is None else [np.array(v, dtype=complex).reshape(-1) for v in b_list]
    if vecs is not None and len(vecs) != len(mats):
        raise DimensionMismatch("need exactly one source vector per time interval")
    if times[0] != 0.0:
        raise ValueError("piecewise grid must start at 0")

    def index(t):
        return int(np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(mats) - 1))

    def A(t):
        return mats[index(t)]

    b = None if vecs is None else (lambda t: vecs[index(t)])
    if len(mats) == 1:
        return make_problem(mats[0], u0, times[-1], None if vecs is None else vecs[0], **kwargs)
    grid = kwargs.pop("grid", None) or SampleGrid(
        np.unique(np.concatenate([times, 0.5 * (times[:-1] + times[1:])])))
    return make_problem(A, u0, times[-1], b, grid=grid, breakpoints=times[1:-1], **kwargs)
