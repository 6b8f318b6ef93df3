"""Explicit LCU block-encodings of the all-at-once matrix at toy scale.

Registers are ordered ``[lcu, flag, clock, system]`` with the leading ones
as ancillas, so the block selected by all-zero ancillas is the leading
``D x D`` corner of the unitary. Every composite operator records how many
times each primitive (``O_A``, ``ADD``, ``CX``) went into it.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionGuardExceeded, NormExceedsAlpha, ShapeMismatch
from .ode_model import DissipativeOdeProblem

UNITARY_GUARD = 2**14
UNITARY_TOL = 1e-10


@dataclass(frozen=True)
class EncodedOracle:
    """A unitary with ``factor * (ancilla-zero block)`` equal to the encoded matrix."""

    unitary: np.ndarray
    register_dims: tuple
    n_ancilla: int
    factor: float = 1.0
    queries: dict = field(default_factory=dict)

    def __post_init__(self):
        dim = int(np.prod(self.register_dims))
        if self.unitary.shape != (dim, dim):
            raise ShapeMismatch(f"unitary shape {self.unitary.shape} does not match registers {self.register_dims}")
        if not self.factor > 0:
            raise ValueError("factor must be positive")

    @property
    def ancilla_dims(self) -> tuple:
        return tuple(self.register_dims[: self.n_ancilla])

    @property
    def data_dim(self) -> int:
        return int(np.prod(self.register_dims[self.n_ancilla:]))

    def unitarity_residual(self) -> float:
        U = self.unitary
        return float(np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]), 2))


def _check_guard(dim: int):
    if dim > UNITARY_GUARD:
        raise DimensionGuardExceeded(f"unitary dimension {dim} exceeds {UNITARY_GUARD}")


def _dilation_matrix(B: np.ndarray) -> np.ndarray:
    U, s, Vh = np.linalg.svd(B)
    c = np.sqrt(np.clip(1 - s**2, 0.0, None))
    top_right = (U * c) @ U.conj().T
    bottom_left = (Vh.conj().T * c) @ Vh
    return np.block([[B, top_right], [bottom_left, -B.conj().T]])


def dilate(matrix, alpha: float) -> EncodedOracle:
    """One-flag unitary dilation of ``matrix / alpha``."""
    B = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if B.shape[0] != B.shape[1]:
        raise ShapeMismatch(f"matrix must be square, got {B.shape}")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    norm = np.linalg.norm(B, 2)
    if norm > alpha * (1 + 1e-12):
        raise NormExceedsAlpha(f"||matrix|| = {norm:.6g} exceeds alpha = {alpha:.6g}")
    W = _dilation_matrix(B / alpha)
    return EncodedOracle(W, (2, B.shape[0]), 1, float(alpha))


def _clock_controlled(blocks: list[np.ndarray], N: int) -> np.ndarray:
    """``sum_t`` (flag, system) unitaries conditioned on clock ``t``; register order flag, clock, system."""
    C = len(blocks)
    out = np.zeros((2, C, N, 2, C, N), dtype=complex)
    for t, D in enumerate(blocks):
        out[:, t, :, :, t, :] = D.reshape(2, N, 2, N)
    return out.reshape(2 * C * N, 2 * C * N)


def oracle_OA(problem: DissipativeOdeProblem, h: float, M: int, Mp: int, first_clock: int = 0) -> EncodedOracle:
    """Clock-controlled dilation of ``A(t h) / alpha_A``.

    Clock values ``first_clock .. first_clock + M - 1`` carry ``A(t h)``; any
    other clock value applies ``X`` to the flag, so it never survives the
    flag-zero projection.
    """
    C, N = M + Mp, problem.dim
    _check_guard(2 * C * N)
    if first_clock < 0 or first_clock + M > C:
        raise ValueError(f"valid clocks {first_clock}..{first_clock + M - 1} do not fit in {C} labels")
    alpha = problem.alpha_A
    blocks = []
    for t in range(C):
        if first_clock <= t < first_clock + M:
            blocks.append(dilate(problem.A_at(t * h), alpha).unitary)
        else:
            blocks.append(_dilation_matrix(np.zeros((N, N), dtype=complex)))
    return EncodedOracle(_clock_controlled(blocks, N), (2, C, N), 1, alpha, {"O_A": 1})


def add_operator(M: int, Mp: int, modulus: Optional[int] = None) -> EncodedOracle:
    """Clock increment ``|t> -> |(t+1) mod m>`` for ``t < m``; labels ``>= m`` are left fixed.

    ``modulus`` defaults to ``M + Mp - 1``. The block-encodings below pass
    ``M + Mp`` so the increment covers every clock label.
    """
    C = M + Mp
    m = C - 1 if modulus is None else modulus
    if not 1 <= m <= C:
        raise ValueError(f"modulus must lie in 1..{C}, got {m}")
    P = np.zeros((C, C))
    for t in range(C):
        P[(t + 1) % m if t < m else t, t] = 1.0
    return EncodedOracle(P.astype(complex), (C,), 0, 1.0, {"ADD": 1})


def prep_unitary(amplitudes) -> np.ndarray:
    """Unitary whose first column is ``amplitudes``, completed by orthonormal extension."""
    c = np.asarray(amplitudes, dtype=complex)
    if not math.isclose(np.linalg.norm(c), 1.0, rel_tol=1e-12):
        raise ValueError("prep amplitudes must be normalized")
    n = c.size
    Q, R = np.linalg.qr(np.column_stack([c, np.eye(n, dtype=complex)])[:, :n])
    if abs(R[0, 0]) < 1e-12:
        Q, R = np.linalg.qr(np.column_stack([c, np.eye(n, dtype=complex)[:, ::-1]])[:, :n])
    Q[:, 0] *= R[0, 0] / abs(R[0, 0])
    return Q


class _Term:
    """A product of named primitives acting on (flag, clock, system)."""

    def __init__(self, dim: int):
        self.matrix = np.eye(dim, dtype=complex)
        self.counts: Counter = Counter()

    def then(self, op: np.ndarray, counts: dict) -> "_Term":
        self.matrix = op @ self.matrix
        self.counts.update(counts)
        return self


def _wrap_guard(C: int, N: int) -> np.ndarray:
    """Flip the flag when the clock reads 0 (it only gets there by wrapping around)."""
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    proj0 = np.zeros((C, C))
    proj0[0, 0] = 1
    rest = np.eye(C) - proj0
    return np.kron(X, np.kron(proj0, np.eye(N))) + np.kron(np.eye(2), np.kron(rest, np.eye(N)))


def _lcu(amplitudes, terms: list[_Term], data_dims: tuple, factor: float) -> EncodedOracle:
    k = len(terms)
    dim = terms[0].matrix.shape[0]
    _check_guard(k * dim)
    sel = np.zeros((k * dim, k * dim), dtype=complex)
    for i, term in enumerate(terms):
        sel[i * dim:(i + 1) * dim, i * dim:(i + 1) * dim] = term.matrix
    prep = prep_unitary(amplitudes)
    W = np.kron(prep.T, np.eye(dim)) @ sel @ np.kron(prep, np.eye(dim))
    counts = Counter()
    for term in terms:
        counts.update(term.counts)
    return EncodedOracle(W, (k, 2) + data_dims, 2, factor, dict(sorted(counts.items())))


def _check_step(problem, h):
    if h * problem.alpha_A > 1:
        raise ValueError(f"h*alpha_A = {h * problem.alpha_A:.3g} exceeds 1")


def _lift(op: EncodedOracle, N: int) -> np.ndarray:
    """Embed a clock-only operator into (flag, clock, system)."""
    return np.kron(np.eye(2), np.kron(op.unitary, np.eye(N)))


def euler_block_encoding(problem: DissipativeOdeProblem, h: float, M: int, Mp: int,
                         add_modulus: Optional[int] = None) -> EncodedOracle:
    """``A_{M,Mp-1} / (2 + h alpha_A)`` for forward Euler."""
    _check_step(problem, h)
    C, N, a = M + Mp, problem.dim, problem.alpha_A
    D = 2 * C * N
    add = add_operator(M, Mp, C if add_modulus is None else add_modulus)
    oa = oracle_OA(problem, h, M, Mp)
    terms = [
        _Term(D),
        _Term(D).then(_lift(add, N), add.queries).then(_wrap_guard(C, N), {"CX": 1}),
        _Term(D).then(oa.unitary, oa.queries).then(_lift(add, N), add.queries),
        _Term(D),
    ]
    amps = np.array([1, 1j, 1j * math.sqrt(a * h), 0]) / math.sqrt(2 + a * h)
    return _lcu(amps, terms, (C, N), 2 + a * h)


def trapezoidal_block_encoding(problem: DissipativeOdeProblem, h: float, M: int, Mp: int,
                               add_modulus: Optional[int] = None) -> EncodedOracle:
    """``A_{M,Mp-1} / (2 + h alpha_A)`` for the trapezoidal rule.

    The fourth term needs ``A(t h)`` on the diagonal at clocks ``1..M``, so it
    uses the generator oracle with its valid window shifted by one clock.
    """
    _check_step(problem, h)
    C, N, a = M + Mp, problem.dim, problem.alpha_A
    D = 2 * C * N
    add = add_operator(M, Mp, C if add_modulus is None else add_modulus)
    oa = oracle_OA(problem, h, M, Mp)
    oa_diag = oracle_OA(problem, h, M, Mp, first_clock=1)
    terms = [
        _Term(D),
        _Term(D).then(_lift(add, N), add.queries).then(_wrap_guard(C, N), {"CX": 1}),
        _Term(D).then(oa.unitary, oa.queries).then(_lift(add, N), add.queries),
        _Term(D).then(oa_diag.unitary, oa_diag.queries),
    ]
    w = 1j * math.sqrt(a * h / 2)
    amps = np.array([1, 1j, w, w]) / math.sqrt(2 + a * h)
    return _lcu(amps, terms, (C, N), 2 + a * h)


def extract_top_left(oracle: EncodedOracle, rows=None, cols=None) -> np.ndarray:
    """``factor`` times the all-ancillas-zero block, optionally restricted to ``rows``/``cols``."""
    d = oracle.data_dim
    block = oracle.factor * oracle.unitary[:d, :d]
    rows = np.arange(d) if rows is None else np.atleast_1d(np.asarray(rows))
    cols = np.arange(d) if cols is None else np.atleast_1d(np.asarray(cols))
    for idx in (rows, cols):
        if idx.size and (idx.min() < 0 or idx.max() >= d):
            raise ShapeMismatch(f"requested indices fall outside the {d}x{d} encoded block")
    return block[np.ix_(rows, cols)]
