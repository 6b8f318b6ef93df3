"""Single-step schemes ``L_j u_{j+1} = R_j u_j + v_j`` and step-size selection.

Three schemes are provided: forward Euler, the trapezoidal rule and the
order-K truncated Dyson series. For Dyson the ordered simplex integrals are
evaluated on a tensor grid of ``q`` cells per axis: a cell contributes the
integrand at its midpoints times the volume of the cell inside the ordered
simplex (``1/m!`` of the cell for ``m`` tied indices). The resulting sum
collapses to a truncated, time-ordered product of per-cell exponentials,
which is how it is evaluated; it is exact for constant ``A`` and ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import (
    InvalidEps,
    NoFeasibleStep,
    OracleToleranceTooCoarse,
    SingularL,
    StepConditionViolated,
    StepTooLarge,
)
from .ode_model import DissipativeOdeProblem
from .reference_oracle import MIN_TOL, default_tol, flow

K_CAP = 40
MAX_BISECTIONS = 60
MAX_QUAD_NODES = 1024


class Task(str, Enum):
    HISTORY = "history"
    FINAL = "final"
    HISTORY_HOMOGENEOUS = "history_homogeneous"


@dataclass(frozen=True)
class SchemeKind:
    variant: str  # "euler" | "trapezoidal" | "dyson"
    order: Optional[int] = None
    quad_nodes: int = 16

    def __post_init__(self):
        aliases = {"trap": "trapezoidal", "trapezoid": "trapezoidal", "fe": "euler"}
        variant = aliases.get(self.variant, self.variant)
        object.__setattr__(self, "variant", variant)
        if variant not in ("euler", "trapezoidal", "dyson"):
            raise ValueError(f"unknown scheme {self.variant!r}")
        if variant == "dyson":
            if self.order is not None and self.order < 1:
                raise ValueError("Dyson order K must be >= 1")
            if self.quad_nodes < 2:
                raise ValueError("Dyson quadrature needs q >= 2 nodes")

    @classmethod
    def euler(cls):
        return cls("euler")

    @classmethod
    def trapezoidal(cls):
        return cls("trapezoidal")

    @classmethod
    def dyson(cls, order: Optional[int] = None, quad_nodes: int = 16):
        return cls("dyson", order, quad_nodes)

    @property
    def oa_queries(self) -> int:
        """O_A queries per block-encoding of the all-at-once matrix."""
        if self.variant == "dyson":
            return self.order or 1
        return 1 if self.variant == "euler" else 2

    def label(self) -> str:
        if self.variant == "dyson":
            return f"dyson(K={self.order},q={self.quad_nodes})"
        return self.variant


@dataclass(frozen=True)
class StepOperators:
    L: np.ndarray
    R: np.ndarray
    v: np.ndarray
    j: int
    h: float

    @property
    def transfer(self) -> np.ndarray:
        """``L^{-1} R``."""
        return np.linalg.solve(self.L, self.R)

    @property
    def source(self) -> np.ndarray:
        """``L^{-1} v``."""
        return np.linalg.solve(self.L, self.v)


def _dyson_terms(problem: DissipativeOdeProblem, t0: float, h: float, K: int, q: int):
    N = problem.dim
    w = h / q
    eye = np.eye(N, dtype=complex)
    P = [eye] + [np.zeros((N, N), dtype=complex) for _ in range(K)]
    V = [np.zeros(N, dtype=complex) for _ in range(K + 1)]
    inhom = not problem.homogeneous
    fact = [math.factorial(m) for m in range(K + 1)]
    for i in range(q):
        s = t0 + (i + 0.5) * w
        wa = w * problem.A_at(s)
        E = [eye, wa]
        for m in range(2, K + 1):
            E.append(E[-1] @ wa)
        E = [E[m] / fact[m] for m in range(K + 1)]
        if inhom:
            # b sits at the earliest time of its tied group: w^m A^{m-1} b / m!
            G = [np.zeros(N, dtype=complex), w * problem.b_at(s)]
            for m in range(2, K + 1):
                G.append(wa @ G[-1] / m)
            new_V = []
            for k in range(K + 1):
                acc = G[k] + V[k]
                for m in range(1, k + 1):
                    acc = acc + E[m] @ V[k - m]
                new_V.append(acc)
            V = new_V
        new_P = []
        for k in range(K + 1):
            acc = P[k]
            for m in range(1, k + 1):
                acc = acc + E[m] @ P[k - m]
            new_P.append(acc)
        P = new_P
    R = sum(P)
    v = sum(V[1:], start=np.zeros(N, dtype=complex))
    return R, v


def step_operators(problem: DissipativeOdeProblem, scheme: SchemeKind, j: int, h: float) -> StepOperators:
    """``(L_j, R_j, v_j)`` of ``scheme`` for the step ``[jh, (j+1)h]``."""
    if j < 0 or (j + 1) * h > problem.T * (1 + 1e-9) + 1e-14:
        raise ValueError(f"step {j} with h={h} leaves [0, T={problem.T}]")
    N = problem.dim
    t0, t1 = j * h, (j + 1) * h
    ah = h * problem.alpha_A
    if scheme.variant == "euler":
        L = np.eye(N, dtype=complex)
        R = L + h * problem.A_at(t0)
        v = h * problem.b_at(t0)
    elif scheme.variant == "trapezoidal":
        if ah >= 2:
            raise SingularL(f"h*alpha_A = {ah:.3g} >= 2: I - (h/2)A may be singular")
        L = np.eye(N) - 0.5 * h * problem.A_at(t1)
        R = np.eye(N) + 0.5 * h * problem.A_at(t0)
        v = 0.5 * h * (problem.b_at(t0) + problem.b_at(t1))
        if np.linalg.svd(L, compute_uv=False)[-1] <= 1e-12:
            raise SingularL(f"L_{j} is numerically singular")
    else:
        if ah > 0.5 * (1 + 1e-12):
            raise StepTooLarge(f"Dyson needs h*alpha_A <= 1/2, got {ah:.4g}")
        if scheme.order is None:
            raise ValueError("Dyson scheme needs an order K (use select_step to choose it)")
        L = np.eye(N, dtype=complex)
        R, v = _dyson_terms(problem, t0, h, scheme.order, scheme.quad_nodes)
    return StepOperators(L, R, v, j, h)


@dataclass(frozen=True)
class LocalErrors:
    e_prop: float
    e_inhom: float


def local_errors(problem: DissipativeOdeProblem, scheme: SchemeKind, j: int, h: float,
                 oracle_tol: float = 1e-10, required: Optional[float] = None,
                 ops: Optional[StepOperators] = None) -> LocalErrors:
    """Spectral-norm local errors of one step against the reference flow.

    ``e_prop = ||L^{-1}R - U(jh,(j+1)h)||`` and
    ``e_inhom = ||L^{-1}v - ∫ U(s,(j+1)h) b(s) ds||``. When ``required`` is
    given the oracle tolerance must be at most ``required / 100``.
    """
    if required is not None and oracle_tol > required / 100 * (1 + 1e-12):
        raise OracleToleranceTooCoarse(
            f"oracle tol {oracle_tol:.1e} is not <= required/100 = {required / 100:.1e}")
    ops = ops or step_operators(problem, scheme, j, h)
    ref = flow(problem, j * h, (j + 1) * h, oracle_tol)
    e_prop = float(np.linalg.norm(ops.transfer - ref.U, 2))
    e_inhom = 0.0 if problem.homogeneous else float(np.linalg.norm(ops.source - ref.w))
    return LocalErrors(e_prop, e_inhom)


@dataclass(frozen=True)
class ToleranceBudget:
    tol_propagator: float
    tol_inhom: float
    task: Task

    def __post_init__(self):
        if not (self.tol_propagator >= 0 and self.tol_inhom >= 0):
            raise ValueError("tolerances must be nonnegative")

    def admits(self, errs: LocalErrors) -> bool:
        ok = errs.e_prop <= self.tol_propagator
        if self.task is not Task.HISTORY_HOMOGENEOUS:
            ok = ok and errs.e_inhom <= self.tol_inhom
        return ok


def contraction_threshold(eta: float, h: float) -> float:
    """``½ η h e^{-ηh}``: the local error that still keeps one step contractive."""
    return 0.5 * eta * h * math.exp(-eta * h)


def final_state_norm(problem: DissipativeOdeProblem, eps: float) -> float:
    tol = max(MIN_TOL, min(1e-10, eps / 10))
    f = flow(problem, 0.0, problem.T, tol)
    return float(np.linalg.norm(f.U @ problem.u0 + f.w))


def tolerance_budget(problem: DissipativeOdeProblem, eps: float, h: float, task,
                     final_norm: Optional[float] = None) -> ToleranceBudget:
    """Right-hand sides of the local-error hypotheses of the history/final theorems.

    ``alpha_A`` and ``alpha_b`` stand in for ``max ||A(t)||`` and
    ``max ||b(t)||``. For the final task ``||u(T)||`` comes from the reference
    oracle unless passed as ``final_norm``.
    """
    task = Task(task)
    if not 0 < eps < 1:
        raise InvalidEps(f"eps must lie in (0, 1), got {eps}")
    eta = problem.eta
    if eta * h > 1:
        raise StepConditionViolated(f"eta*h = {eta * h:.3g} > 1")
    a_max, b_max = problem.alpha_A, problem.alpha_b
    u0n = float(np.linalg.norm(problem.u0))
    T = problem.T
    contract = contraction_threshold(eta, h)
    if task is Task.HISTORY:
        spread = math.sqrt(a_max + b_max / u0n)
        e1 = eta**1.5 * h * eps / (
            144 * math.sqrt(2) * math.sqrt(1 + T * b_max**2 / (eta * u0n**2)) * spread)
        e2 = u0n * eta * h * eps / (72 * math.sqrt(2) * math.sqrt(T) * spread)
    elif task is Task.FINAL:
        uT = final_state_norm(problem, eps) if final_norm is None else final_norm
        e1 = uT / (u0n + b_max / eta) * eta * h * eps / 128
        e2 = uT * eta * h * eps / 32
    else:
        e1 = eta**1.5 * h * eps / (32 * math.sqrt(a_max))
        e2 = math.inf
    return ToleranceBudget(min(contract, e1), e2, task)


@dataclass(frozen=True)
class StepSelection:
    h: float
    M: int
    K: Optional[int]
    scheme: SchemeKind
    budget: ToleranceBudget
    final_norm: Optional[float] = None


def _probe_indices(M: int, count: int = 5) -> list[int]:
    return sorted({int(round(k * (M - 1) / max(count - 1, 1))) for k in range(count)})


def dyson_remainder_bound(alpha_h: float, K: int) -> float:
    return alpha_h ** (K + 1) / math.factorial(K + 1)


def select_step(problem: DissipativeOdeProblem, scheme: SchemeKind, eps: float, task,
                refine_quadrature: bool = True) -> StepSelection:
    """Choose ``(h, M, K)`` so the theorem hypotheses for ``task`` hold.

    Dyson uses ``M = ceil(2 alpha_A T)`` (so ``alpha_A h <= 1/2``) and the
    smallest ``K`` whose a-priori remainders fit the budget; for
    time-dependent ``A`` the quadrature node count is doubled until the
    measured probe errors are within twice the a-priori remainder. Euler and
    the trapezoidal rule bisect on ``h`` against measured local errors at
    probe steps.
    """
    task = Task(task)
    if not 0 < eps < 1:
        raise InvalidEps(f"eps must lie in (0, 1), got {eps}")
    T, eta, alpha = problem.T, problem.eta, problem.alpha_A
    final_norm = final_state_norm(problem, eps) if task is Task.FINAL else None

    if scheme.variant == "dyson":
        M = max(1, math.ceil(2 * alpha * T * (1 - 1e-12)))
        h = T / M
        if eta * h > 1:
            raise StepConditionViolated(f"eta*h = {eta * h:.3g} > 1")
        budget = tolerance_budget(problem, eps, h, task, final_norm)
        ah = alpha * h
        for K in range(1, K_CAP + 1):
            ok_prop = dyson_remainder_bound(ah, K) <= budget.tol_propagator
            ok_inhom = (task is Task.HISTORY_HOMOGENEOUS
                        or problem.alpha_b * h * ah**K / math.factorial(K + 1) <= budget.tol_inhom)
            if ok_prop and ok_inhom:
                break
        else:
            raise NoFeasibleStep(f"no Dyson order K <= {K_CAP} meets the budget")
        chosen = replace(scheme, order=K)
        if refine_quadrature and not problem.time_independent:
            chosen = _refine_quadrature(problem, chosen, h, M)
        return StepSelection(h, M, K, chosen, budget, final_norm)

    return _bisect_step(problem, scheme, eps, task, final_norm)


def _refine_quadrature(problem, scheme, h, M):
    K = scheme.order
    target_prop = 2 * dyson_remainder_bound(problem.alpha_A * h, K)
    target_inhom = 2 * problem.alpha_b * h * (problem.alpha_A * h) ** K / math.factorial(K + 1)
    tol = default_tol(min(target_prop, target_inhom) if target_inhom > 0 else target_prop)
    probes = _probe_indices(M)
    q = scheme.quad_nodes
    while True:
        cand = replace(scheme, quad_nodes=q)
        errs = [local_errors(problem, cand, j, h, tol) for j in probes]
        if all(e.e_prop <= target_prop and e.e_inhom <= target_inhom + 1e-300 for e in errs):
            return cand
        if 2 * q > MAX_QUAD_NODES:
            return cand
        q *= 2


def _bisect_step(problem, scheme, eps, task, final_norm):
    T, eta, alpha = problem.T, problem.eta, problem.alpha_A
    h_hi = min(T, 1.0 / eta)
    if scheme.variant == "trapezoidal":
        h_hi = min(h_hi, 1.9 / alpha)

    def quantize(h):
        M = max(1, math.ceil(T / h * (1 - 1e-12)))
        return T / M, M

    def feasible(h):
        h, M = quantize(h)
        budget = tolerance_budget(problem, eps, h, task, final_norm)
        need = min(budget.tol_propagator, budget.tol_inhom)
        tol = default_tol(need)
        for j in _probe_indices(M):
            errs = local_errors(problem, scheme, j, h, tol, required=need)
            if not budget.admits(errs):
                return None
        return h, M, budget

    iterations = 0
    hit = feasible(h_hi)
    if hit is not None:
        h, M, budget = hit
        return StepSelection(h, M, None, scheme, budget, final_norm)
    hi, lo, found = h_hi, h_hi, None
    while found is None:
        iterations += 1
        if iterations > MAX_BISECTIONS:
            raise NoFeasibleStep("no feasible step size found by halving")
        hi, lo = lo, lo / 2
        found = feasible(lo)
    while hi / lo > 1.005:
        iterations += 1
        if iterations > MAX_BISECTIONS:
            raise NoFeasibleStep("bisection exhausted its iteration budget")
        mid = math.sqrt(hi * lo)
        hit = feasible(mid)
        if hit is not None:
            lo, found = mid, hit
        else:
            hi = mid
    h, M, budget = found
    return StepSelection(h, M, None, scheme, budget, final_norm)
