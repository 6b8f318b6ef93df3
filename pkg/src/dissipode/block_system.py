"""Padded all-at-once block system, exact solves and condition-number bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionGuardExceeded,
    HypothesisViolated,
    IndexOutOfRange,
    ShapeMismatch,
    SingularBlock,
    StepCountMismatch,
)
from .ode_model import DENSE_GUARD, DissipativeOdeProblem
from .reference_oracle import default_tol
from .schemes import SchemeKind, StepOperators, contraction_threshold, local_errors, step_operators
from .solution import SolutionBundle


@dataclass(frozen=True)
class AllAtOnceSystem:
    """Block lower-bidiagonal system with ``M`` evolution rows and ``Mp - 1`` padding rows.

    Block row 0 is ``I u_0 = u0``. Block row ``k`` (``1 <= k <= M``) reads
    ``-R_{k-1} u_{k-1} + L_{k-1} u_k = v_{k-1}``; padding rows read
    ``-u_{k-1} + u_k = 0``. ``diag_blocks[k]`` is the diagonal block of row
    ``k`` and ``sub_blocks[k-1]`` the *positive* ``R`` whose negative sits
    left of it.
    """

    M: int
    Mp: int
    N: int
    h: float
    diag_blocks: tuple
    sub_blocks: tuple
    rhs_blocks: tuple
    scheme: Optional[SchemeKind] = None
    problem: Optional[DissipativeOdeProblem] = None

    @property
    def n_blocks(self) -> int:
        return self.M + self.Mp

    @property
    def dim(self) -> int:
        return self.n_blocks * self.N

    @property
    def L(self) -> list:
        """Evolution-row ``L_j`` for ``j = 0..M-1``."""
        return list(self.diag_blocks[1 : self.M + 1])

    @property
    def R(self) -> list:
        return list(self.sub_blocks[: self.M])

    def dense(self) -> np.ndarray:
        N = self.N
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for k, blk in enumerate(self.diag_blocks):
            out[k * N:(k + 1) * N, k * N:(k + 1) * N] = blk
        for k, blk in enumerate(self.sub_blocks, start=1):
            out[k * N:(k + 1) * N, (k - 1) * N:k * N] = -blk
        return out

    def rhs(self) -> np.ndarray:
        return np.concatenate(self.rhs_blocks)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        blocks = x.reshape(self.n_blocks, self.N)
        out = np.empty_like(blocks, dtype=complex)
        out[0] = self.diag_blocks[0] @ blocks[0]
        for k in range(1, self.n_blocks):
            out[k] = self.diag_blocks[k] @ blocks[k] - self.sub_blocks[k - 1] @ blocks[k - 1]
        return out.reshape(-1)


def from_step_operators(ops: Sequence[StepOperators], u0, Mp: int = 1, h: float = float("nan"),
                        scheme=None, problem=None) -> AllAtOnceSystem:
    """Assemble directly from precomputed step triples."""
    if Mp < 1:
        raise ValueError("Mp must be >= 1")
    u0 = np.asarray(u0, dtype=complex).reshape(-1)
    N, M = u0.size, len(ops)
    eye = np.eye(N, dtype=complex)
    diag = [eye] + [op.L for op in ops] + [eye] * (Mp - 1)
    sub = [op.R for op in ops] + [eye] * (Mp - 1)
    rhs = [u0] + [op.v for op in ops] + [np.zeros(N, dtype=complex)] * (Mp - 1)
    return AllAtOnceSystem(M, Mp, N, h, tuple(diag), tuple(sub), tuple(rhs), scheme, problem)


def assemble(problem: DissipativeOdeProblem, scheme: SchemeKind, M: int, Mp: int, h: float) -> AllAtOnceSystem:
    """Build ``A_{M,Mp-1}`` and ``b_{M,Mp-1}`` from the scheme's step operators."""
    if M < 1 or Mp < 1:
        raise ValueError("need M >= 1 and Mp >= 1")
    if abs(M * h - problem.T) > 1e-12 * problem.T:
        raise StepCountMismatch(f"M*h = {M * h!r} but T = {problem.T!r}")
    ops = [step_operators(problem, scheme, j, h) for j in range(M)]
    return from_step_operators(ops, problem.u0, Mp, h, scheme, problem)


def forward_solve(system: AllAtOnceSystem) -> SolutionBundle:
    """Block forward substitution ``u_{k} = L^{-1}(R u_{k-1} + v)``; padding copies ``u_M``."""
    N, n = system.N, system.n_blocks
    blocks = np.empty((n, N), dtype=complex)
    try:
        blocks[0] = np.linalg.solve(system.diag_blocks[0], system.rhs_blocks[0])
        for k in range(1, n):
            blocks[k] = np.linalg.solve(
                system.diag_blocks[k], system.sub_blocks[k - 1] @ blocks[k - 1] + system.rhs_blocks[k])
    except np.linalg.LinAlgError as exc:
        raise SingularBlock(str(exc)) from exc
    b = system.rhs()
    res = np.linalg.norm(system.matvec(blocks.reshape(-1)) - b) / max(np.linalg.norm(b), 1e-300)
    if not np.isfinite(res) or res > 1e-10 * n:
        raise SingularBlock(f"forward solve residual {res:.2e} exceeds {1e-10 * n:.1e}")
    return SolutionBundle(blocks, h=system.h, M=system.M, Mp=system.Mp, residual=float(res))


def _padded(system: AllAtOnceSystem, idx: int, which: str) -> np.ndarray:
    """``L_idx`` / ``R_idx`` with the convention (``L_{-1} = I``)."""
    if which == "L":
        return system.diag_blocks[idx + 1]
    return system.sub_blocks[idx]


def inverse_block(system: AllAtOnceSystem, i: int, j: int) -> np.ndarray:
    """Block ``(i, j)`` of ``A^{-1}``: ``1_{i>=j} (prod_{l=j}^{i-1} L_l^{-1} R_l) L_{j-1}^{-1}``."""
    n = system.n_blocks
    if not (0 <= i < n and 0 <= j < n):
        raise IndexOutOfRange(f"block index ({i}, {j}) outside 0..{n - 1}")
    N = system.N
    if i < j:
        return np.zeros((N, N), dtype=complex)
    out = np.linalg.inv(_padded(system, j - 1, "L"))
    for l in range(j, i):
        out = np.linalg.solve(_padded(system, l, "L"), _padded(system, l, "R") @ out)
    return out


def block_norm_bound(norm_grid) -> float:
    """``sqrt(max column sum * max row sum)`` of a grid of block norms."""
    grid = np.asarray(norm_grid, dtype=float)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise ShapeMismatch(f"norm grid must be square, got shape {grid.shape}")
    if np.any(grid < 0):
        raise ValueError("block norms must be nonnegative")
    return float(math.sqrt(grid.sum(axis=0).max() * grid.sum(axis=1).max()))


def block_norms(matrix: np.ndarray, n: int) -> np.ndarray:
    """Spectral norms of the ``n x n`` grid of equal square blocks of ``matrix``."""
    d = matrix.shape[0] // n
    if matrix.shape != (n * d, n * d):
        raise ShapeMismatch(f"cannot split {matrix.shape} into {n}x{n} square blocks")
    return np.array([[np.linalg.norm(matrix[i * d:(i + 1) * d, j * d:(j + 1) * d], 2)
                      for j in range(n)] for i in range(n)])


@dataclass(frozen=True)
class KappaBound:
    norm_bound: float
    inv_bound: float
    kappa: float
    max_L: float
    max_R: float
    max_L_inv: float
    worst_step_error: float = float("nan")


def condition_bound(M: int, Mp: int, eta: float, T: float, max_L: float, max_R: float,
                    max_L_inv: float) -> KappaBound:
    """Closed-form norm and inverse-norm bounds for ``A_{M,Mp-1}``."""
    norm_bound = 2 + max_L + max_R
    inv_bound = (2 * math.e * M / (eta * T) + Mp) * (1 + max_L_inv)
    return KappaBound(norm_bound, inv_bound, norm_bound * inv_bound, max_L, max_R, max_L_inv)


def step_norms(system: AllAtOnceSystem) -> tuple[float, float, float]:
    """``max ||L_j||``, ``max ||R_j||``, ``max ||L_j^{-1}||`` over evolution rows."""
    max_L = max(np.linalg.norm(L, 2) for L in system.L)
    max_R = max(np.linalg.norm(R, 2) for R in system.R)
    max_L_inv = max(1.0 / np.linalg.svd(L, compute_uv=False)[-1] for L in system.L)
    return float(max_L), float(max_R), float(max_L_inv)


def kappa_bound(system: AllAtOnceSystem, eta: Optional[float] = None, T: Optional[float] = None,
                check_hypothesis: bool = True, oracle_tol: Optional[float] = None) -> KappaBound:
    """Condition-number bound, after verifying the local-error hypothesis at every step.

    The hypothesis ``||L_j^{-1}R_j - U_j|| <= ½ηh e^{-ηh}`` is measured against
    the reference oracle; a failing step raises :class:`HypothesisViolated`.
    """
    problem = system.problem
    if eta is None or T is None:
        if problem is None:
            raise ValueError("eta and T are required for a system without a problem")
        eta = problem.eta if eta is None else eta
        T = problem.T if T is None else T
    if eta <= 0:
        raise HypothesisViolated(-1, float("nan"), 0.0)
    h = system.h
    if eta * h > 1:
        raise HypothesisViolated(-1, eta * h, 1.0)
    worst = float("nan")
    if check_hypothesis:
        if problem is None or system.scheme is None:
            raise ValueError("hypothesis check needs the originating problem and scheme")
        threshold = contraction_threshold(eta, h)
        tol = oracle_tol or default_tol(threshold)
        worst = 0.0
        for j in range(system.M):
            ops = StepOperators(system.diag_blocks[j + 1], system.sub_blocks[j], system.rhs_blocks[j + 1], j, h)
            err = local_errors(problem, system.scheme, j, h, tol, ops=ops).e_prop
            worst = max(worst, err)
            if err > threshold:
                raise HypothesisViolated(j, err, threshold)
    kb = condition_bound(system.M, system.Mp, eta, T, *step_norms(system))
    return KappaBound(kb.norm_bound, kb.inv_bound, kb.kappa, kb.max_L, kb.max_R, kb.max_L_inv, worst)


def kappa_exact(system: AllAtOnceSystem) -> float:
    """``sigma_max / sigma_min`` of the dense realization."""
    if system.dim > DENSE_GUARD:
        raise DimensionGuardExceeded(f"dense dimension {system.dim} exceeds {DENSE_GUARD}")
    s = np.linalg.svd(system.dense(), compute_uv=False)
    return float(s[0] / s[-1])
