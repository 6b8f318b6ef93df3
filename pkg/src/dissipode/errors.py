"""Exception hierarchy.

Errors deriving from :class:`HypothesisError` mean a mathematical precondition
(dissipativity, local-error hypothesis, step condition) failed; the CLI maps
them to exit code 2. Everything else is a usage or input problem.
"""


class DissipodeError(Exception):
    """Base class for all library errors."""


class HypothesisError(DissipodeError):
    """A mathematical hypothesis required by a bound or theorem does not hold."""


# ode_model
class DimensionMismatch(DissipodeError, ValueError):
    pass


class NonHermitianEigenFailure(DissipodeError, ArithmeticError):
    pass


class DimensionGuardExceeded(DissipodeError, ValueError):
    pass


class NonpositivityViolation(HypothesisError, ValueError):
    pass


class NotNegativeDefinite(HypothesisError, ValueError):
    pass


# schemes
class StepTooLarge(HypothesisError, ValueError):
    pass


class SingularL(DissipodeError, ArithmeticError):
    pass


class OracleToleranceTooCoarse(DissipodeError, ValueError):
    pass


class InvalidEps(DissipodeError, ValueError):
    pass


class StepConditionViolated(HypothesisError, ValueError):
    pass


class NoFeasibleStep(HypothesisError, RuntimeError):
    pass


# block_system
class StepCountMismatch(DissipodeError, ValueError):
    pass


class SingularBlock(DissipodeError, ArithmeticError):
    pass


class IndexOutOfRange(DissipodeError, IndexError):
    pass


class HypothesisViolated(HypothesisError):
    def __init__(self, step: int, measured: float, threshold: float):
        self.step = step
        self.measured = measured
        self.threshold = threshold
        super().__init__(
            f"local propagator error {measured:.3e} at step {step} exceeds "
            f"the contraction threshold {threshold:.3e}"
        )


# reference_oracle
class ToleranceUnreachable(DissipodeError, RuntimeError):
    pass


# analysis / block_encoding
class ShapeMismatch(DissipodeError, ValueError):
    pass


class ZeroFinalState(DissipodeError, ArithmeticError):
    pass


class NormExceedsAlpha(DissipodeError, ValueError):
    pass
