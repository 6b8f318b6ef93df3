"""State errors, success probabilities, padding choice and the query-cost model."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .block_system import KappaBound, condition_bound
from .errors import ShapeMismatch, ZeroFinalState
from .ode_model import DissipativeOdeProblem
from .reference_oracle import decay_profile, default_tol
from .schemes import SchemeKind, StepSelection, Task, select_step, step_operators
from .solution import SolutionBundle

DECAY_GRID_POINTS = 64
MAX_NORM_PROBES = 257


def _distance(x: np.ndarray, y: np.ndarray, scalar: bool) -> float:
    d = float(np.linalg.norm(x - y))
    # Scalar real problems carry no meaningful sign once normalized.
    if scalar and not np.any(np.imag(x)) and not np.any(np.imag(y)):
        d = min(d, float(np.linalg.norm(x + y)))
    return d


def state_error_history(solution: SolutionBundle, reference: SolutionBundle) -> float:
    """Distance between the normalized stacked histories ``u_0..u_M``."""
    if solution.M != reference.M or solution.N != reference.N:
        raise ShapeMismatch(
            f"histories differ in shape: M={solution.M}/{reference.M}, N={solution.N}/{reference.N}")
    if not math.isclose(solution.h, reference.h, rel_tol=1e-12) and not (
            math.isnan(solution.h) or math.isnan(reference.h)):
        raise ShapeMismatch(f"step sizes differ: {solution.h} vs {reference.h}")
    x = solution.history.reshape(-1)
    y = reference.history.reshape(-1)
    x = x / np.linalg.norm(x)
    y = y / np.linalg.norm(y)
    return _distance(x, y, solution.N == 1)


def state_error_final(solution, reference) -> float:
    """``|| u_M/||u_M|| - u(T)/||u(T)|| ||``.

    ``reference`` may be a bundle (its ``final`` block is used) or a plain vector.
    """
    x = np.asarray(solution.final if isinstance(solution, SolutionBundle) else solution, dtype=complex)
    y = np.asarray(reference.final if isinstance(reference, SolutionBundle) else reference, dtype=complex)
    if x.shape != y.shape:
        raise ShapeMismatch(f"final states differ in shape: {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx < 1e-300 or ny < 1e-300:
        raise ZeroFinalState("final state has zero norm")
    return _distance(x / nx, y / ny, x.size == 1)


def success_probability(solution: SolutionBundle, M: Optional[int] = None, Mp: Optional[int] = None) -> float:
    """Probability of measuring a clock value ``>= M`` on the normalized padded solution."""
    M = solution.M if M is None else M
    Mp = solution.Mp if Mp is None else Mp
    sq = solution.norms**2
    if sq.size != M + Mp:
        raise ShapeMismatch(f"solution has {sq.size} blocks, expected M + Mp = {M + Mp}")
    return float(sq[M:].sum() / sq.sum())


def success_probability_floor(M: int, Mp: int, final_norm: float, max_norm: float) -> float:
    return Mp * final_norm**2 / (16 * (M + Mp) * max_norm**2)


@dataclass(frozen=True)
class PaddingChoice:
    Mp_rule: int
    Mp_continuous: float


def optimal_padding(M: int, eta: float, T: float) -> PaddingChoice:
    """Rounded rule ``ceil(M/(eta T))`` and the exact minimizer of :func:`padding_objective`."""
    eT = eta * T
    if eT <= 0:
        raise ValueError("need eta*T > 0")
    rule = max(1, math.ceil(M / eT - 1e-12))
    cont = 2 * M / (eT * (1 + math.sqrt(1 + 8 / eT)))
    return PaddingChoice(rule, cont)


def padding_objective(x, M: int, eta_T: float):
    """``sqrt((M+x)/x) * (M/(eta T) + x)``: amplification rounds times the padded condition number."""
    x = np.asarray(x, dtype=float)
    return np.sqrt((M + x) / x) * (M / eta_T + x)


@dataclass(frozen=True)
class ComplexityReport:
    task: str
    scheme: str
    h: float
    M: int
    K: Optional[int]
    Mp: int
    kappa_bound: float
    queries_OA: float
    queries_state_prep: float
    aa_rounds: float
    success_prob_lower: float
    decay_ratio: float
    eps: float = float("nan")
    eps_solver: float = float("nan")
    max_norm: float = float("nan")
    final_norm: float = float("nan")
    max_L: float = float("nan")
    max_R: float = float("nan")
    max_L_inv: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def _probe_steps(problem: DissipativeOdeProblem, M: int) -> list[int]:
    if problem.time_independent:
        return [0]
    if M <= MAX_NORM_PROBES:
        return list(range(M))
    return sorted(set(np.linspace(0, M - 1, MAX_NORM_PROBES).round().astype(int).tolist()))


def step_norm_estimates(problem, scheme: SchemeKind, M: int, h: float) -> tuple[float, float, float]:
    """``max ||L||, max ||R||, max ||L^{-1}||`` over a probe subset of steps (all steps when few)."""
    mL = mR = mLi = 0.0
    for j in _probe_steps(problem, M):
        ops = step_operators(problem, scheme, j, h)
        s = np.linalg.svd(ops.L, compute_uv=False)
        mL, mLi = max(mL, s[0]), max(mLi, 1 / s[-1])
        mR = max(mR, np.linalg.norm(ops.R, 2))
    return float(mL), float(mR), float(mLi)


@dataclass(frozen=True)
class CostIngredients:
    """Everything the final-state query count depends on, so ``Mp`` can be varied cheaply."""

    M: int
    eta: float
    T: float
    eps: float
    q_scheme: int
    max_L: float
    max_R: float
    max_L_inv: float
    max_norm: float
    final_norm: float
    solver_constant: float = 1.0

    def kappa(self, Mp: int) -> KappaBound:
        return condition_bound(self.M, Mp, self.eta, self.T, self.max_L, self.max_R, self.max_L_inv)

    def final_queries(self, Mp: int) -> tuple[float, float, float, float]:
        """``(queries_OA, solver_calls, aa_rounds, eps')`` for padding ``Mp``."""
        kb = self.kappa(Mp)
        eps_s = self.final_norm * self.eps / (8 * math.sqrt(self.M + Mp) * self.max_norm)
        g = self.max_norm / self.final_norm
        rounds = math.ceil(4 * g * math.sqrt((self.M + Mp) / Mp))
        calls = math.ceil(self.solver_constant * kb.kappa * math.log(1 / eps_s))
        oa = math.ceil(self.solver_constant * self.q_scheme * kb.kappa * math.log(1 / eps_s)) * rounds
        return float(oa), float(calls * rounds), float(rounds), eps_s


def cost_ingredients(problem: DissipativeOdeProblem, sel: StepSelection, eps: float,
                     solver_constant: float = 1.0) -> CostIngredients:
    scheme = sel.scheme
    mL, mR, mLi = step_norm_estimates(problem, scheme, sel.M, sel.h)
    max_norm, final_norm = decay_profile(problem, DECAY_GRID_POINTS, default_tol(eps))
    return CostIngredients(sel.M, problem.eta, problem.T, eps, scheme.oa_queries, mL, mR, mLi,
                           max_norm, final_norm, solver_constant)


def cost_model(problem: DissipativeOdeProblem, scheme: SchemeKind, task, eps: float,
               Mp: Optional[int] = None, solver_constant: float = 1.0,
               selection: Optional[StepSelection] = None) -> ComplexityReport:
    """Modeled query counts for preparing the history or final state to accuracy ``eps``.

    The linear-system solver is charged ``solver_constant * kappa * ln(1/eps')``
    calls, each costing ``K`` (Dyson), 1 (Euler) or 2 (trapezoid) queries to
    the generator oracle. The final-state task multiplies by the
    amplitude-amplification round count ``ceil(4 g sqrt((M+Mp)/Mp))``.
    History tasks use ``Mp = 1``; the final task defaults to ``ceil(M/(eta T))``.
    """
    task = Task(task)
    sel = selection or select_step(problem, scheme, eps, task)
    ing = cost_ingredients(problem, sel, eps, solver_constant)
    g = ing.max_norm / ing.final_norm if ing.final_norm > 0 else math.inf

    if task is Task.FINAL:
        if Mp is None:
            Mp = optimal_padding(sel.M, problem.eta, problem.T).Mp_rule
        oa, prep, rounds, eps_s = ing.final_queries(Mp)
        p_lo = success_probability_floor(sel.M, Mp, ing.final_norm, ing.max_norm)
    else:
        Mp = 1 if Mp is None else Mp
        eps_s, rounds, p_lo = eps, 1.0, 1.0
        kb = ing.kappa(Mp)
        oa = float(math.ceil(solver_constant * ing.q_scheme * kb.kappa * math.log(1 / eps_s)))
        prep = float(math.ceil(solver_constant * kb.kappa * math.log(1 / eps_s)))
    kb = ing.kappa(Mp)
    return ComplexityReport(
        task=task.value, scheme=sel.scheme.label(), h=sel.h, M=sel.M, K=sel.K, Mp=Mp,
        kappa_bound=kb.kappa, queries_OA=oa, queries_state_prep=prep, aa_rounds=rounds,
        success_prob_lower=p_lo, decay_ratio=g, eps=eps, eps_solver=eps_s,
        max_norm=ing.max_norm, final_norm=ing.final_norm,
        max_L=ing.max_L, max_R=ing.max_R, max_L_inv=ing.max_L_inv,
    )


# -- end-to-end points and sweeps ---------------------------------------------

SWEEP_AXES = ("T", "eps", "scheme", "Mp")
SWEEP_COLUMNS = (
    "axis", "value", "scheme", "task", "eps", "T", "h", "M", "K", "Mp",
    "kappa_exact", "kappa_bound", "state_error", "success_prob", "queries_OA", "aa_rounds", "error",
)


@dataclass(frozen=True)
class PointResult:
    problem: str
    scheme: str
    task: str
    eps: float
    T: float
    h: float
    M: int
    K: Optional[int]
    Mp: int
    residual: float
    state_error: float
    success_prob: float
    kappa_exact: Optional[float]
    kappa_bound: Optional[float]
    report: Optional[ComplexityReport]
    kind: Optional[SchemeKind] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("kind")
        out["report"] = None if self.report is None else self.report.to_dict()
        return out


def run_point(problem: DissipativeOdeProblem, scheme: SchemeKind, task, eps: float,
              Mp: Optional[int] = None, h: Optional[float] = None, with_cost: bool = True) -> PointResult:
    """Select a step (or use ``h``), assemble, solve, and score against the reference oracle."""
    from .block_system import assemble, forward_solve, kappa_exact, step_norms
    from .reference_oracle import exact_history, solution_at
    from .ode_model import DENSE_GUARD

    task = Task(task)
    sel = None
    if h is None:
        sel = select_step(problem, scheme, eps, task)
        h, M, chosen, K = sel.h, sel.M, sel.scheme, sel.K
    else:
        M = max(1, round(problem.T / h))
        h = problem.T / M
        chosen, K = scheme, scheme.order
        if scheme.variant == "dyson" and K is None:
            raise ValueError("a fixed step with the Dyson scheme needs an explicit order K")
    if Mp is None:
        Mp = optimal_padding(M, problem.eta, problem.T).Mp_rule if task is Task.FINAL and problem.eta > 0 else 1

    system = assemble(problem, chosen, M, Mp, h)
    sol = forward_solve(system)
    tol = default_tol(eps)
    if task is Task.FINAL:
        err = state_error_final(sol, solution_at(problem, [problem.T], tol)[0])
    else:
        err = state_error_history(sol, exact_history(problem, M, h, tol))
    k_exact = kappa_exact(system) if system.dim <= DENSE_GUARD else None
    k_bound = None
    if problem.eta > 0 and problem.eta * h <= 1:
        k_bound = condition_bound(M, Mp, problem.eta, problem.T, *step_norms(system)).kappa
    report = None
    if with_cost and sel is not None:
        report = cost_model(problem, chosen, task, eps, Mp=Mp, selection=sel)
    return PointResult(problem.name, chosen.label(), task.value, eps, problem.T, h, M, K, Mp,
                       sol.residual, err, success_probability(sol), k_exact, k_bound, report, chosen)


@dataclass(frozen=True)
class SweepConfig:
    problem: dict
    axis: str
    values: tuple = ()
    scheme: str = "euler"
    dyson_order: Optional[int] = None
    quad_nodes: int = 16
    task: str = "history"
    eps: float = 0.1
    Mp: Optional[int] = None
    h: Optional[float] = None

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        Task(self.task)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def sweep_row(config: SweepConfig, value) -> dict:
    """One CSV row; failures land in the ``error`` column instead of raising."""
    from .errors import DissipodeError
    from .io import build_problem, with_horizon

    spec, eps, Mp = config.problem, config.eps, config.Mp
    scheme = SchemeKind(config.scheme, config.dyson_order, config.quad_nodes)
    if config.axis == "T":
        spec = with_horizon(spec, float(value))
    elif config.axis == "eps":
        eps = float(value)
    elif config.axis == "scheme":
        scheme = SchemeKind(str(value), config.dyson_order, config.quad_nodes)
    else:
        Mp = int(value)
    row = dict.fromkeys(SWEEP_COLUMNS, None)
    row.update(axis=config.axis, value=value, scheme=scheme.label(), task=config.task, eps=eps)
    try:
        problem = build_problem(spec)
        row["T"] = problem.T
        res = run_point(problem, scheme, config.task, eps, Mp=Mp, h=config.h)
    except (DissipodeError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return {k: _fmt(v) for k, v in row.items()}
    rep = res.report
    row.update(
        scheme=res.scheme, h=res.h, M=res.M, K=res.K, Mp=res.Mp, kappa_exact=res.kappa_exact,
        kappa_bound=res.kappa_bound, state_error=res.state_error, success_prob=res.success_prob,
        queries_OA=None if rep is None else rep.queries_OA,
        aa_rounds=None if rep is None else rep.aa_rounds,
    )
    return {k: _fmt(v) for k, v in row.items()}


def _sweep_task(args):
    return sweep_row(*args)


def sweep(config: SweepConfig, jobs: int = 1) -> list[dict]:
    """Rows in the order of ``config.values``; points run on ``jobs`` worker processes."""
    work = [(config, v) for v in config.values]
    if jobs <= 1 or len(work) <= 1:
        return [sweep_row(*w) for w in work]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_task, work))


def write_csv(rows: list[dict], fh) -> None:
    import csv

    writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\r\n")
    writer.writeheader()
    writer.writerows(rows)
