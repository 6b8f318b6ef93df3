"""Command-line front end: ``dissipode <command> [options]``.

Exit codes: 0 success, 1 usage or I/O problems, 2 a mathematical hypothesis
failed (non-dissipative input, infeasible step, violated invariant).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import analysis
from .block_system import assemble, kappa_bound, kappa_exact
from .errors import DissipodeError, HypothesisError, HypothesisViolated
from .io import ProblemSpecError, export_system, load_problem, parse_matrix, parse_vector
from .ode_model import (
    DENSE_GUARD,
    certify_dissipativity,
    heat_dissipation_bound,
    make_heat_problem,
    make_non_hermitian_problem,
)
from .reference_oracle import propagator
from .schemes import SchemeKind, Task, select_step

SCHEMA = "dissipode/1"
EXIT_OK, EXIT_USAGE, EXIT_HYPOTHESIS = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad arguments; here 2 is reserved for hypothesis violations."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _clean(obj):
    """JSON-safe copy: NaN/inf become null, complex numbers become [re, im]."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(obj.real)), _clean(float(obj.imag))]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


@contextmanager
def _sink(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def emit(args, payload: dict):
    doc = {"schema": SCHEMA, "command": args.command}
    doc.update(payload)
    with _sink(args.output) as fh:
        if args.format == "csv":
            row = _flatten(payload)
            writer = csv.DictWriter(fh, fieldnames=list(row), lineterminator="\r\n")
            writer.writeheader()
            writer.writerow(row)
        else:
            fh.write(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, (list, tuple)):
            out[key] = json.dumps(_clean(v))
        else:
            v = _clean(v)
            out[key] = "" if v is None else (f"{v:.10g}" if isinstance(v, float) else v)
    return out


def _scheme(args) -> SchemeKind:
    return SchemeKind(args.scheme, args.dyson_order, args.quad_nodes)


def _mp(args):
    if args.mp in (None, "auto"):
        return None
    try:
        mp = int(args.mp)
    except ValueError:
        raise UsageError(f"--mp must be a positive integer or 'auto', got {args.mp!r}")
    if mp < 1:
        raise UsageError("--mp must be >= 1")
    return mp


def _problem(args):
    if args.problem is None:
        raise UsageError("--problem is required")
    path = Path(args.problem)
    if not path.is_file():
        raise UsageError(f"problem file not found: {path}")
    try:
        return load_problem(path)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})")
    except (KeyError, ProblemSpecError) as exc:
        raise UsageError(f"{path}: bad problem document ({exc})")


def _point_payload(problem, args) -> dict:
    res = analysis.run_point(problem, _scheme(args), args.task, args.eps, Mp=_mp(args), h=args.h)
    out = {"problem": problem.name, "eta": problem.eta, "alpha_A": problem.alpha_A,
           "alpha_b": problem.alpha_b, "result": res.to_dict()}
    if getattr(args, "export", None):
        system = assemble(problem, res.kind, res.M, res.Mp, res.h)
        mtx, side = export_system(system, args.export)
        out["export"] = {"matrix": str(mtx), "sidecar": str(side)}
    return out


def cmd_solve(args) -> int:
    emit(args, _point_payload(_problem(args), args))
    return EXIT_OK


def cmd_kappa(args) -> int:
    problem = _problem(args)
    scheme = _scheme(args)
    Mp = _mp(args) or 1
    if args.h is not None or args.M is not None:
        M = args.M if args.M is not None else max(1, round(problem.T / args.h))
        h = problem.T / M
        if scheme.variant == "dyson" and scheme.order is None:
            raise UsageError("--dyson-order is required with a fixed step")
    else:
        sel = select_step(problem, scheme, args.eps, args.task)
        M, h, scheme = sel.M, sel.h, sel.scheme
    system = assemble(problem, scheme, M, Mp, h)
    out = {"problem": problem.name, "scheme": scheme.label(), "M": M, "Mp": Mp, "h": h,
           "eta": problem.eta, "T": problem.T, "dim": system.dim,
           "kappa_exact": kappa_exact(system) if system.dim <= DENSE_GUARD else None}
    code = EXIT_OK
    if problem.diagnostic or problem.eta <= 0:
        out.update(hypothesis="not-applicable", kappa_bound=None)
    else:
        try:
            kb = kappa_bound(system)
            out.update(hypothesis="passed", kappa_bound=kb.kappa, norm_bound=kb.norm_bound,
                       inv_bound=kb.inv_bound, worst_step_error=kb.worst_step_error)
        except HypothesisViolated as exc:
            out.update(hypothesis="violated", kappa_bound=None, violation={
                "step": exc.step, "measured": exc.measured, "threshold": exc.threshold})
            code = EXIT_HYPOTHESIS
    emit(args, out)
    return code


def _parse_values(text: str, axis: str) -> tuple:
    items = [s.strip() for s in text.split(",") if s.strip()]
    if axis == "scheme":
        return tuple(items)
    try:
        return tuple(int(s) if axis == "Mp" else float(s) for s in items)
    except ValueError:
        raise UsageError(f"could not parse --values {text!r} for axis {axis}")


def cmd_sweep(args) -> int:
    problem_path = Path(args.problem) if args.problem else None
    if problem_path is None or not problem_path.is_file():
        raise UsageError(f"problem file not found: {args.problem}")
    spec = json.loads(problem_path.read_text(encoding="utf-8"))
    cfg = analysis.SweepConfig(
        problem=spec, axis=args.axis, values=_parse_values(args.values, args.axis),
        scheme=args.scheme, dyson_order=args.dyson_order, quad_nodes=args.quad_nodes,
        task=args.task, eps=args.eps, Mp=_mp(args), h=args.h,
    )
    rows = analysis.sweep(cfg, jobs=args.jobs)
    if args.format == "csv":
        with _sink(args.output) as fh:
            analysis.write_csv(rows, fh)
    else:
        emit(args, {"axis": args.axis, "rows": rows})
    return EXIT_OK


def cmd_cost(args) -> int:
    problem = _problem(args)
    rep = analysis.cost_model(problem, _scheme(args), args.task, args.eps, Mp=_mp(args))
    emit(args, {"problem": problem.name, "report": rep.to_dict()})
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_suites

    only = [s.strip() for s in args.filter.split(",")] if args.filter else None
    try:
        results = run_suites(args.seed, only, args.inject_fault)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.format == "json":
        emit(args, {"seed": args.seed, "suites": [
            {"name": r.name, "passed": r.passed, "checks": r.checks, "failures": r.failures} for r in results]})
    else:
        with _sink(args.output) as fh:
            for r in results:
                status = "PASS" if r.passed else "FAIL"
                fh.write(f"{status} {r.name} ({r.checks} checks)\n")
                for f in r.failures:
                    fh.write(f"  - {f}\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_HYPOTHESIS


def _certificate(problem) -> dict:
    rep = certify_dissipativity(problem)
    return {"measured_eta": rep.measured_eta, "worst_time": rep.worst_time, "passed": rep.passed}


def cmd_app_heat(args) -> int:
    c = None if args.c is None else (lambda t, x, _c=args.c: np.full(len(x), _c))
    f = None if args.f is None else (lambda t, x, _f=args.f: np.full(len(x), _f))
    problem = make_heat_problem(args.a, args.b_vel, args.d, args.n_x, c=c, f=f, T=args.T)
    sym = problem.A_at(0.0) + problem.A_at(0.0).conj().T
    out = {"problem": "heat", "dim": problem.dim, "eta": problem.eta, "alpha_A": problem.alpha_A,
           "certificate": _certificate(problem),
           "lambda_max_sym": float(np.linalg.eigvalsh(sym)[-1]),
           "sym_bound": -heat_dissipation_bound(args.a, args.d, args.n_x)}
    if args.solve:
        out["result"] = analysis.run_point(problem, _scheme(args), args.task, args.eps,
                                           Mp=_mp(args), h=args.h).to_dict()
    emit(args, out)
    return EXIT_OK


def cmd_app_nonhermitian(args) -> int:
    try:
        H = parse_matrix(json.loads(args.H))
        L = parse_matrix(json.loads(args.L))
        u0 = parse_vector(json.loads(args.u0)) if args.u0 else np.eye(H.shape[0])[0]
    except (json.JSONDecodeError, ProblemSpecError) as exc:
        raise UsageError(f"could not parse matrix arguments: {exc}")
    problem = make_non_hermitian_problem(H, L, u0, args.T)
    U = propagator(problem, 0.0, problem.T, 1e-12)
    out = {"problem": "non_hermitian", "eta": problem.eta, "alpha_A": problem.alpha_A,
           "certificate": _certificate(problem), "propagator": U,
           "propagator_norm": float(np.linalg.norm(U, 2)),
           "decay_bound": math.exp(-problem.eta * problem.T)}
    if args.solve:
        out["result"] = analysis.run_point(problem, _scheme(args), args.task, args.eps,
                                           Mp=_mp(args), h=args.h).to_dict()
    emit(args, out)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, problem=True):
    if problem:
        p.add_argument("--problem", help="JSON problem document")
    p.add_argument("--scheme", default="euler", choices=["euler", "trap", "trapezoidal", "dyson"])
    p.add_argument("--dyson-order", type=int, default=None, metavar="K")
    p.add_argument("--quad-nodes", type=int, default=16, metavar="Q")
    p.add_argument("--task", default="history", choices=[t.value for t in Task])
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--mp", default=None, help="padding copies Mp, or 'auto'")
    p.add_argument("--h", type=float, default=None, help="fixed step size (skips step selection)")
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.add_argument("--output", default=None, help="output path (default stdout)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dissipode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="select a step, solve the all-at-once system, score it")
    _add_common(p)
    p.add_argument("--export", default=None, help="write the system as <base>.mtx + <base>.json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("kappa", help="exact condition number versus the closed-form bound")
    _add_common(p)
    p.add_argument("--M", type=int, default=None, help="number of evolution steps")
    p.set_defaults(func=cmd_kappa)

    p = sub.add_parser("sweep", help="CSV sweep over T, eps, scheme or Mp")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=list(analysis.SWEEP_AXES))
    p.add_argument("--values", default="", help="comma-separated axis values")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep, format="csv")

    p = sub.add_parser("cost", help="modeled query counts")
    _add_common(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("verify", help="run the seeded invariant suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--filter", default=None, help="comma-separated suite names")
    p.add_argument("--inject-fault", default=None, help="deliberately corrupt a component (e.g. padding)")
    p.add_argument("--format", default="text", choices=["text", "json"])
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("app-heat", help="semi-discretized heat equation")
    _add_common(p, problem=False)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b-vel", type=float, default=0.0)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n-x", type=int, default=4)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--c", type=float, default=None, help="constant reaction coefficient (<= 0)")
    p.add_argument("--f", type=float, default=None, help="constant source")
    p.add_argument("--solve", action="store_true")
    p.set_defaults(func=cmd_app_heat)

    p = sub.add_parser("app-nonhermitian", help="u' = (-iH + L) u with L negative definite")
    _add_common(p, problem=False)
    p.add_argument("--H", required=True, help="JSON matrix")
    p.add_argument("--L", required=True, help="JSON matrix")
    p.add_argument("--u0", default=None, help="JSON vector (default e_0)")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--solve", action="store_true")
    p.set_defaults(func=cmd_app_nonhermitian)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HypothesisError as exc:
        print(f"hypothesis violated: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (DissipodeError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
