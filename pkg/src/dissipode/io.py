"""JSON problem documents and Matrix Market export of assembled systems."""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Union

import numpy as np
import scipy.io
import scipy.sparse

from .block_system import AllAtOnceSystem
from .ode_model import (
    DissipativeOdeProblem,
    make_heat_problem,
    make_non_hermitian_problem,
    make_piecewise_problem,
)

PROBLEM_KINDS = ("heat", "non_hermitian", "custom_matrix_list")


class ProblemSpecError(ValueError):
    pass


def _complex(x) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ProblemSpecError(f"complex entries are [re, im] pairs, got {x!r}")
        return complex(float(x[0]), float(x[1]))
    return complex(x)


def parse_matrix(rows) -> np.ndarray:
    """Nested lists of numbers or ``[re, im]`` pairs; a bare number is a 1x1 matrix."""
    if not isinstance(rows, list):
        return np.array([[_complex(rows)]])
    return np.array([[_complex(x) for x in row] for row in rows], dtype=complex)


def parse_vector(vals) -> np.ndarray:
    if not isinstance(vals, list):
        return np.array([_complex(vals)])
    return np.array([_complex(x) for x in vals], dtype=complex)


def _encode_complex(z: complex):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def encode_matrix(m) -> list:
    return [[_encode_complex(x) for x in row] for row in np.atleast_2d(m)]


def read_spec(source: Union[str, Path, dict]) -> dict:
    if isinstance(source, dict):
        return copy.deepcopy(source)
    with open(source, encoding="utf-8") as fh:
        return json.load(fh)


def with_horizon(spec: dict, T: float) -> dict:
    """Copy of ``spec`` on horizon ``T``; piecewise time grids are stretched proportionally."""
    out = copy.deepcopy(spec)
    if out.get("kind") == "custom_matrix_list" and "times" in out:
        times = np.asarray(out["times"], dtype=float)
        out["times"] = (times * (T / times[-1])).tolist()
    out["T"] = float(T)
    return out


def _time_grid(spec: dict) -> list:
    if "times" in spec:
        return [float(t) for t in spec["times"]]
    if "T" not in spec:
        raise ProblemSpecError("problem needs either 'T' or 'times'")
    return [0.0, float(spec["T"])]


def build_problem(spec: dict) -> DissipativeOdeProblem:
    """Problem from a parsed document ``{"kind": ..., parameters...}``."""
    try:
        return _build(spec)
    except KeyError as exc:
        raise ProblemSpecError(f"problem spec is missing field {exc.args[0]!r}") from None


def _build(spec: dict) -> DissipativeOdeProblem:
    kind = spec.get("kind")
    if kind not in PROBLEM_KINDS:
        raise ProblemSpecError(f"unknown problem kind {kind!r}; expected one of {PROBLEM_KINDS}")
    if kind == "heat":
        c, f = spec.get("c"), spec.get("f")
        c_fn = None if c is None else (lambda t, x, _c=float(c): np.full(len(x), _c))
        f_fn = None if f is None else (lambda t, x, _f=float(f): np.full(len(x), _f))
        return make_heat_problem(
            a=float(spec.get("a", 1.0)), b_vel=float(spec.get("b_vel", 0.0)),
            d=int(spec.get("d", 1)), n_x=int(spec.get("n_x", 4)), c=c_fn, f=f_fn,
            T=float(spec.get("T", 1.0)),
        )
    if kind == "non_hermitian":
        H, L = parse_matrix(spec["H"]), parse_matrix(spec["L"])
        u0 = parse_vector(spec["u0"])
        return make_non_hermitian_problem(H, L, u0, float(spec.get("T", 1.0)), eta=spec.get("eta"))

    times = _time_grid(spec)
    A_list = [parse_matrix(m) for m in spec["A"]]
    b_list = None if spec.get("b") is None else [parse_vector(v) for v in spec["b"]]
    overrides = {k: float(spec[k]) for k in ("eta", "alpha_A", "alpha_b") if k in spec}
    return make_piecewise_problem(
        times, A_list, parse_vector(spec["u0"]), b_list,
        name=spec.get("name", "custom"), diagnostic=bool(spec.get("diagnostic", False)), **overrides,
    )


def load_problem(source: Union[str, Path, dict]) -> DissipativeOdeProblem:
    return build_problem(read_spec(source))


def export_matrix(matrix, path: Union[str, Path], comment: str = "") -> Path:
    """Write a dense complex matrix as a Matrix Market coordinate file."""
    path = Path(path)
    sparse = scipy.sparse.coo_matrix(np.asarray(matrix, dtype=complex))
    scipy.io.mmwrite(str(path), sparse, comment=comment, field="complex", symmetry="general")
    return path if path.suffix == ".mtx" else path.with_name(path.name + ".mtx")


def import_matrix(path: Union[str, Path]) -> np.ndarray:
    m = scipy.io.mmread(str(path))
    return np.asarray(m.toarray() if scipy.sparse.issparse(m) else m, dtype=complex)


def export_system(system: AllAtOnceSystem, path: Union[str, Path]) -> tuple[Path, Path]:
    """``<path>.mtx`` with the dense all-at-once matrix plus a ``<path>.json`` sidecar."""
    base = Path(path)
    if base.suffix == ".mtx":
        base = base.with_suffix("")
    mtx = export_matrix(system.dense(), base.with_name(base.name + ".mtx"))
    meta = {
        "M": system.M, "Mp": system.Mp, "N": system.N, "h": system.h,
        "scheme": None if system.scheme is None else system.scheme.label(),
    }
    side = base.with_name(base.name + ".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return mtx, side


def import_system(path: Union[str, Path]) -> tuple[np.ndarray, dict]:
    base = Path(path)
    if base.suffix in (".mtx", ".json"):
        base = base.with_suffix("")
    matrix = import_matrix(base.with_name(base.name + ".mtx"))
    meta = json.loads(base.with_name(base.name + ".json").read_text(encoding="utf-8"))
    return matrix, meta
