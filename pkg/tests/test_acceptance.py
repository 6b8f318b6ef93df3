"""Acceptance gate: one check per criterion at full size, each with its runtime limit.

Run under pytest (a summary line per criterion is printed at the end) or
directly with ``python3 tests/test_acceptance.py``.
"""

import dataclasses
import itertools
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

sys.path.insert(0, str(Path(__file__).parent))

from conftest import record_acceptance, scalar_problem  # noqa: E402
from dissipode.analysis import (  # noqa: E402
    cost_ingredients,
    cost_model,
    optimal_padding,
    padding_objective,
    state_error_final,
    state_error_history,
    success_probability,
    success_probability_floor,
)
from dissipode.block_encoding import (  # noqa: E402
    euler_block_encoding,
    extract_top_left,
    oracle_OA,
    trapezoidal_block_encoding,
)
from dissipode.block_system import (  # noqa: E402
    assemble,
    block_norm_bound,
    block_norms,
    forward_solve,
    kappa_bound,
    kappa_exact,
)
from dissipode.errors import HypothesisViolated  # noqa: E402
from dissipode.ode_model import (  # noqa: E402
    heat_dissipation_bound,
    make_diagnostic_problem,
    make_heat_problem,
    make_non_hermitian_problem,
    make_problem,
)
from dissipode.random_problems import random_dissipative_problem  # noqa: E402
from dissipode.reference_oracle import decay_profile, exact_history, propagator, solution_at  # noqa: E402
from dissipode.schemes import SchemeKind, Task, local_errors, select_step, step_operators  # noqa: E402


@dataclasses.dataclass
class Outcome:
    passed: bool
    detail: str
    seconds: float = 0.0


def _timed(limit):
    """Run a check and fold its runtime limit into the verdict."""

    def wrap(fn):
        def run():
            t0 = time.perf_counter()
            ok, detail = fn()
            dt = time.perf_counter() - t0
            within = dt < limit
            return Outcome(ok and within, f"{detail}; {dt:.1f}s (limit {limit:g}s)", dt)

        run.__name__ = fn.__name__
        return run

    return wrap


@_timed(30)
def criterion_1():
    rng = np.random.default_rng(101)
    worst_hi = worst_lo = -np.inf
    for _ in range(50):
        p = random_dissipative_problem(rng)
        for _ in range(20):
            t0, t1 = np.sort(rng.uniform(0, p.T, 2))
            s = np.linalg.svd(propagator(p, t0, t1, 1e-10), compute_uv=False)
            worst_hi = max(worst_hi, s[0] - math.exp(-p.eta * (t1 - t0)))
            worst_lo = max(worst_lo, math.exp(-p.alpha_A * (t1 - t0)) - s[-1])
    ok = worst_hi <= 1e-8 and worst_lo <= 1e-8
    return ok, f"max excess over decay bound {worst_hi:.2e}, over growth floor {worst_lo:.2e}"


@_timed(10)
def criterion_2():
    rng = np.random.default_rng(202)
    bad = 0
    for _ in range(200):
        n, d = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        X = rng.normal(size=(n * d, n * d)) + 1j * rng.normal(size=(n * d, n * d))
        bad += block_norm_bound(block_norms(X, n)) < np.linalg.norm(X, 2) * (1 - 1e-12)
    return bad == 0, f"{bad} violations in 200 block matrices"


@_timed(120)
def criterion_3():
    rng = np.random.default_rng(303)
    schemes = (SchemeKind.euler(), SchemeKind.trapezoidal(), SchemeKind.dyson(2), SchemeKind.dyson(4))
    checked = bad = attempts = 0
    worst = 0.0
    while checked < 200 and attempts < 1000:
        attempts += 1
        p = random_dissipative_problem(rng, T=float(rng.uniform(0.5, 3)))
        scheme = schemes[attempts % len(schemes)]
        M_min = math.ceil(2 * p.alpha_A * p.T)
        if M_min > 64:
            continue
        M = int(rng.integers(M_min, 65))
        system = assemble(p, scheme, M, int(rng.integers(1, 17)), p.T / M)
        try:
            kb = kappa_bound(system)
        except HypothesisViolated:
            continue
        checked += 1
        ratio = kappa_exact(system) / kb.kappa
        worst = max(worst, ratio)
        bad += ratio > 1
    ok = checked == 200 and bad == 0
    return ok, f"{bad} violations over {checked} systems (max kappa_exact/bound {worst:.3f})"


@_timed(10)
def criterion_4():
    def k(problem_for_T, M):
        return kappa_exact(assemble(problem_for_T(M * 0.1), SchemeKind.euler(), M, 1, 0.1))

    dissip = lambda T: scalar_problem(T=T)
    flat = lambda T: make_diagnostic_problem(np.zeros((1, 1)), [1.0], T)
    r = k(dissip, 100) / k(dissip, 10)
    r0 = k(flat, 100) / k(flat, 10)
    return r <= 1.3 and r0 >= 5, f"dissipative ratio {r:.3f} (need <= 1.3), eta=0 ratio {r0:.2f} (need >= 5)"


@_timed(60)
def criterion_5():
    rng = np.random.default_rng(505)
    hs = np.array([0.2, 0.1, 0.05, 0.025])
    slopes = {"euler": [], "trapezoidal": []}
    for _ in range(20):
        p = random_dissipative_problem(rng, N=int(rng.integers(2, 5)), T=1.0)
        for scheme in (SchemeKind.euler(), SchemeKind.trapezoidal()):
            e = [local_errors(p, scheme, 0, h, 1e-13).e_prop for h in hs]
            slopes[scheme.variant].append(np.polyfit(np.log(hs), np.log(e), 1)[0])
    dyson_bad = 0
    for K in (1, 2, 3):
        for _ in range(5):
            p = random_dissipative_problem(rng, time_dependent=False)
            h = 0.5 / p.alpha_A
            R = step_operators(p, SchemeKind.dyson(K), 0, h).R
            err = np.linalg.norm(R - scipy.linalg.expm(h * p.A_at(0.0)), 2)
            dyson_bad += err > 2 * (p.alpha_A * h) ** (K + 1) / math.factorial(K + 1)
    eu, tr = np.array(slopes["euler"]), np.array(slopes["trapezoidal"])
    ok = np.all(np.abs(eu - 2) <= 0.2) and np.all(np.abs(tr - 3) <= 0.25) and dyson_bad == 0
    return ok, (f"Euler slopes {eu.min():.3f}..{eu.max():.3f}, trapezoid {tr.min():.3f}..{tr.max():.3f}, "
                f"Dyson bound violations {dyson_bad}")


@_timed(120)
def criterion_6():
    rng = np.random.default_rng(2024)
    problems = [(random_dissipative_problem(rng, T=float(rng.uniform(0.5, 2))), Task.HISTORY) for _ in range(10)]
    problems += [(random_dissipative_problem(rng, inhomogeneous=False, T=float(rng.uniform(0.5, 2))),
                  Task.HISTORY_HOMOGENEOUS) for _ in range(10)]
    worst = 0.0
    runs = 0
    for eps in (0.3, 0.1, 0.03):
        for p, task in problems:
            schemes = [SchemeKind.dyson()]
            if task is Task.HISTORY_HOMOGENEOUS:
                schemes.append(SchemeKind.trapezoidal())
            for scheme in schemes:
                sel = select_step(p, scheme, eps, task)
                sol = forward_solve(assemble(p, sel.scheme, sel.M, 1, sel.h))
                err = state_error_history(sol, exact_history(p, sel.M, sel.h, min(1e-10, eps / 100)))
                worst = max(worst, err / eps)
                runs += 1
    return worst <= 1, f"max state_error/eps {worst:.2e} over {runs} solves"


@_timed(120)
def criterion_7():
    rng = np.random.default_rng(707)
    eps = 0.1
    worst_err = 0.0
    worst_prob = np.inf
    for _ in range(10):
        p = random_dissipative_problem(rng, T=float(rng.uniform(0.5, 3)))
        sel = select_step(p, SchemeKind.dyson(), eps, Task.FINAL)
        Mp = optimal_padding(sel.M, p.eta, p.T).Mp_rule
        sol = forward_solve(assemble(p, sel.scheme, sel.M, Mp, sel.h))
        uT = solution_at(p, [p.T], 1e-11)[0]
        worst_err = max(worst_err, state_error_final(sol, uT) / eps)
        max_norm, final_norm = decay_profile(p, 64, 1e-11)
        floor = success_probability_floor(sel.M, Mp, final_norm, max_norm)
        worst_prob = min(worst_prob, success_probability(sol) / floor)
    ok = worst_err <= 1 and worst_prob >= 1
    return ok, f"max state_error/eps {worst_err:.2e}, min success_prob/floor {worst_prob:.1f}"


@_timed(10)
def criterion_8():
    bad_argmin = 0
    for eT in (1, 2, 5, 10, 20):
        for M in range(1, 65):
            xs = np.arange(1, M + 1)
            best = int(xs[np.argmin(padding_objective(xs, M, eT))])
            x = optimal_padding(M, 1.0, eT).Mp_continuous
            bad_argmin += best not in {max(1, math.floor(x)), min(M, max(1, math.ceil(x)))}
    ratios = {}
    for eT in (1, 2, 5, 10, 20):
        p = make_problem(-np.eye(1), [1.0], float(eT), b=[1.0])
        for scheme in (SchemeKind.dyson(), SchemeKind.euler()):
            sel = select_step(p, scheme, 0.1, Task.FINAL)
            ing = cost_ingredients(p, sel, 0.1)
            best = min(ing.final_queries(Mp)[0] for Mp in range(1, 4 * sel.M + 1))
            rule = ing.final_queries(optimal_padding(sel.M, 1.0, float(eT)).Mp_rule)[0]
            ratios[(eT, scheme.variant)] = rule / best
    worst_key = max(ratios, key=ratios.get)
    ok = bad_argmin == 0 and all(r <= 1.25 for r in ratios.values())
    return ok, (f"{bad_argmin} argmin misses; worst Mp_rule cost / optimal {ratios[worst_key]:.3f} "
                f"at eta*T={worst_key[0]} ({worst_key[1]}), need <= 1.25")


@_timed(60)
def criterion_9():
    steady = lambda T: make_problem(-np.eye(1), [1.0], T, b=[1.0])
    fin = [cost_model(steady(T), SchemeKind.euler(), "final", 0.1).queries_OA for T in (2.0, 8.0)]
    hom = [cost_model(scalar_problem(T=T), SchemeKind.dyson(), "history_homogeneous", 0.1).queries_OA
           for T in (2.0, 8.0, 32.0)]
    eu = [cost_model(scalar_problem(), SchemeKind.euler(), "history", e).queries_OA for e in (0.01, 0.005)]
    r_fin = fin[1] / fin[0]
    spread = max(hom) / min(hom) - 1
    r_eps = eu[1] / eu[0]
    ok = 1.6 <= r_fin <= 2.6 and spread < 0.15 and 1.6 <= r_eps <= 2.4
    return ok, f"final 4T/T {r_fin:.3f}, homogeneous Dyson spread {spread:.1%}, Euler eps-halving {r_eps:.3f}"


@_timed(30)
def criterion_10():
    rng = np.random.default_rng(1010)
    worst_rec = worst_unit = 0.0
    counts_ok = True
    for N, M, Mp in itertools.product((1, 2), (1, 2, 3), (1, 2)):
        p = random_dissipative_problem(rng, N=N)
        for ha in (0.25, 0.5):
            h = ha / p.alpha_A
            q = dataclasses.replace(p, T=M * h)
            worst_unit = max(worst_unit, oracle_OA(q, h, M, Mp).unitarity_residual())
            for builder, scheme, n_oa in ((euler_block_encoding, SchemeKind.euler(), 1),
                                          (trapezoidal_block_encoding, SchemeKind.trapezoidal(), 2)):
                enc = builder(q, h, M, Mp)
                dense = assemble(q, scheme, M, Mp, h).dense()
                worst_rec = max(worst_rec, np.linalg.norm(extract_top_left(enc) - dense, 2))
                worst_unit = max(worst_unit, enc.unitarity_residual())
                counts_ok &= enc.queries.get("O_A") == n_oa and enc.queries.get("ADD") == 2
                counts_ok &= math.isclose(enc.factor, 2 + ha)
    ok = worst_rec <= 1e-9 and worst_unit <= 1e-10 and counts_ok
    return ok, (f"max reconstruction error {worst_rec:.1e}, max unitarity residual {worst_unit:.1e}, "
                f"query counts {'match' if counts_ok else 'differ'}")


@_timed(30)
def criterion_11():
    margins = []
    for d, n_x in ((1, 4), (1, 8), (2, 4)):
        A = make_heat_problem(1.0, 0.0, d, n_x).A_at(0.0)
        lam = np.linalg.eigvalsh(A + A.conj().T)[-1]
        margins.append(-heat_dissipation_bound(1.0, d, n_x) - lam)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    cases = [
        (make_non_hermitian_problem(sx, -np.eye(2), [1, 0], 1.0),
         lambda t: math.exp(-t) * (math.cos(t) * np.eye(2) - 1j * math.sin(t) * sx)),
        (make_non_hermitian_problem(np.zeros((2, 2)), np.diag([-1.0, -2.0]), [1, 1], 1.0),
         lambda t: np.diag([math.exp(-t), math.exp(-2 * t)])),
        (make_non_hermitian_problem(lambda t: t * sz, -0.5 * np.eye(2), [1, 0], 2.0),
         lambda t: math.exp(-0.5 * t) * np.diag(np.exp(-0.5j * t**2 * np.array([1, -1])))),
    ]
    worst = 0.0
    for p, closed in cases:
        for t in np.linspace(0.25, p.T, 4):
            worst = max(worst, np.linalg.norm(propagator(p, 0.0, t, 1e-12) - closed(t), 2))
    ok = min(margins) >= -1e-10 and worst <= 1e-8
    return ok, f"min heat eigen margin {min(margins):.3f}, max propagator deviation {worst:.1e}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.slow
@pytest.mark.parametrize("number", range(1, len(CRITERIA) + 1))
def test_criterion(number):
    out = CRITERIA[number - 1]()
    record_acceptance(number, out.passed, out.detail)
    assert out.passed, out.detail


if __name__ == "__main__":
    failed = 0
    for i, check in enumerate(CRITERIA, start=1):
        out = check()
        failed += not out.passed
        print(f"criterion {i:2d}: {'PASS' if out.passed else 'FAIL'}  {out.detail}", flush=True)
    sys.exit(1 if failed else 0)
