from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SolutionBundle:
    """Solution blocks ``u_0 .. u_{M+Mp-1}`` of an all-at-once solve (or of the exact flow).

    ``history`` is the first ``M + 1`` blocks; ``final`` is block ``M``.
    ``residual`` is the relative residual of the solve that produced it
    (NaN for reference solutions).
    """

    blocks: np.ndarray  # shape (M + Mp, N)
    h: float
    M: int
    Mp: int = 1
    residual: float = float("nan")

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.blocks, axis=1)

    @property
    def history(self) -> np.ndarray:
        return self.blocks[: self.M + 1]

    @property
    def final(self) -> np.ndarray:
        return self.blocks[self.M]

    @property
    def N(self) -> int:
        return self.blocks.shape[1]

    def stacked(self) -> np.ndarray:
        return self.blocks.reshape(-1)
