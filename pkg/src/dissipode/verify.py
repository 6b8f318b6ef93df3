"""Seeded invariant suites behind ``dissipode verify``.

Each suite is small enough to finish in seconds; the full-size versions live
in the test suite.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .analysis import state_error_history
from .block_encoding import euler_block_encoding, extract_top_left, trapezoidal_block_encoding
from .block_system import (
    AllAtOnceSystem,
    assemble,
    block_norm_bound,
    block_norms,
    forward_solve,
    kappa_bound,
    kappa_exact,
)
from .errors import HypothesisViolated
from .ode_model import make_problem
from .random_problems import random_dissipative_problem
from .reference_oracle import exact_history, propagator
from .schemes import SchemeKind, Task, local_errors, select_step

FAULTS = ("padding",)


@dataclass
class SuiteResult:
    name: str
    checks: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def check(self, ok: bool, what: str):
        self.checks += 1
        if not ok:
            self.failures.append(what)


def _perturb_padding(system: AllAtOnceSystem) -> AllAtOnceSystem:
    sub = list(system.sub_blocks)
    sub[-1] = sub[-1] * (1 + 1e-3)
    return dataclasses.replace(system, sub_blocks=tuple(sub))


def suite_stability(rng, fault=None) -> SuiteResult:
    res = SuiteResult("stability")
    for _ in range(5):
        p = random_dissipative_problem(rng)
        for _ in range(4):
            t0, t1 = sorted(rng.uniform(0, p.T, size=2))
            U = propagator(p, t0, t1, 1e-11)
            s = np.linalg.svd(U, compute_uv=False)
            res.check(s[0] <= math.exp(-p.eta * (t1 - t0)) + 1e-8, f"decay bound on [{t0:.3f}, {t1:.3f}]")
            res.check(s[-1] >= math.exp(-p.alpha_A * (t1 - t0)) - 1e-8, f"lower bound on [{t0:.3f}, {t1:.3f}]")
    return res


def suite_block_norm(rng, fault=None) -> SuiteResult:
    res = SuiteResult("block-norm")
    for _ in range(50):
        n, d = rng.integers(1, 5), rng.integers(1, 4)
        big = rng.normal(size=(n * d, n * d)) + 1j * rng.normal(size=(n * d, n * d))
        exact = np.linalg.norm(big, 2)
        res.check(block_norm_bound(block_norms(big, n)) >= exact * (1 - 1e-12), "bound below exact norm")
    return res


def suite_padding(rng, fault=None) -> SuiteResult:
    res = SuiteResult("padding")
    p = random_dissipative_problem(rng, N=2)
    M, Mp = 4, 3
    system = assemble(p, SchemeKind.euler(), M, Mp, p.T / M)
    if fault == "padding":
        system = _perturb_padding(system)
    eye = np.eye(system.N)
    for k in range(M, M + Mp - 1):
        res.check(np.array_equal(system.sub_blocks[k], eye), f"padding sub-block {k} is not I")
        res.check(np.array_equal(system.diag_blocks[k + 1], eye), f"padding diagonal block {k + 1} is not I")
        res.check(not np.any(system.rhs_blocks[k + 1]), f"padding rhs block {k + 1} is not 0")
    sol = forward_solve(system)
    for k in range(M + 1, M + Mp):
        res.check(np.array_equal(sol.blocks[k], sol.blocks[M]), f"padded block {k} differs from u_M")
    return res


def suite_kappa(rng, fault=None) -> SuiteResult:
    res = SuiteResult("kappa")
    schemes = (SchemeKind.euler(), SchemeKind.trapezoidal(), SchemeKind.dyson(3))
    for i in range(12):
        p = random_dissipative_problem(rng, T=float(rng.uniform(1, 4)))
        scheme = schemes[i % 3]
        M = max(int(math.ceil(2 * p.alpha_A * p.T)), int(rng.integers(4, 33)))
        system = assemble(p, scheme, M, int(rng.integers(1, 9)), p.T / M)
        if fault == "padding":
            system = _perturb_padding(system)
        try:
            kb = kappa_bound(system)
        except HypothesisViolated:
            continue
        res.check(kappa_exact(system) <= kb.kappa, f"kappa_exact above bound ({scheme.label()}, M={M})")
    return res


def suite_convergence(rng, fault=None) -> SuiteResult:
    res = SuiteResult("convergence")
    hs = np.array([0.2, 0.1, 0.05, 0.025])
    for _ in range(3):
        p = random_dissipative_problem(rng, N=int(rng.integers(2, 5)), T=1.0)
        for scheme, target, width in ((SchemeKind.euler(), 2, 0.2), (SchemeKind.trapezoidal(), 3, 0.25)):
            e = [local_errors(p, scheme, 0, h, 1e-13).e_prop for h in hs]
            slope = np.polyfit(np.log(hs), np.log(e), 1)[0]
            res.check(abs(slope - target) <= width, f"{scheme.variant} slope {slope:.3f}")
    return res


def suite_reconstruction(rng, fault=None) -> SuiteResult:
    res = SuiteResult("reconstruction")
    for N in (1, 2):
        p = random_dissipative_problem(rng, N=N, T=1.0)
        for M, Mp, ah in ((2, 1, 0.25), (3, 2, 0.5)):
            h = ah / p.alpha_A
            q = dataclasses.replace(p, T=M * h)
            for enc, scheme in ((euler_block_encoding, SchemeKind.euler()),
                                (trapezoidal_block_encoding, SchemeKind.trapezoidal())):
                o = enc(q, h, M, Mp)
                system = assemble(q, scheme, M, Mp, h)
                if fault == "padding":
                    system = _perturb_padding(system)
                dev = np.abs(extract_top_left(o) - system.dense()).max()
                res.check(dev <= 1e-9, f"{scheme.variant} reconstruction off by {dev:.2e}")
                res.check(o.unitarity_residual() <= 1e-10, f"{scheme.variant} encoding not unitary")
    return res


def suite_theorem(rng, fault=None) -> SuiteResult:
    res = SuiteResult("theorem")
    for inhom in (True, False):
        p = random_dissipative_problem(rng, N=2, T=1.0, inhomogeneous=inhom)
        task = Task.HISTORY if inhom else Task.HISTORY_HOMOGENEOUS
        sel = select_step(p, SchemeKind.dyson(), 0.1, task)
        system = assemble(p, sel.scheme, sel.M, 1, sel.h)
        err = state_error_history(forward_solve(system), exact_history(p, sel.M, sel.h))
        res.check(err <= 0.1, f"history error {err:.3e} above 0.1")
    return res


SUITES: dict[str, Callable] = {
    "stability": suite_stability,
    "block-norm": suite_block_norm,
    "padding": suite_padding,
    "kappa": suite_kappa,
    "convergence": suite_convergence,
    "reconstruction": suite_reconstruction,
    "theorem": suite_theorem,
}


def run_suites(seed: int = 0, only: Optional[list] = None, fault: Optional[str] = None) -> list[SuiteResult]:
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; known faults: {FAULTS}")
    names = list(SUITES) if not only else list(only)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s) {unknown}; available: {list(SUITES)}")
    out = []
    order = list(SUITES)
    for name in names:
        # seed by the suite's fixed position so --filter reproduces the full run
        rng = np.random.default_rng([seed, order.index(name)])
        out.append(SUITES[name](rng, fault))
    return out
