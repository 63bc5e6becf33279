"""Exception hierarchy shared by all mshem modules."""


class MshemError(Exception):
    """Base class for all errors raised by this package."""


class CaseFormatError(MshemError):
    """Case text could not be parsed.  Carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CaseSemanticsError(MshemError):
    """Case parsed but violates a structural invariant (duplicate bus, no slack, ...)."""


class NonConvergence(MshemError):
    """Newton iteration exhausted max_iter without meeting the tolerance."""


class SingularJacobian(MshemError):
    """Power-flow Jacobian is numerically singular (at or beyond the nose)."""


class ZeroLeadingCoefficient(MshemError):
    """Series reciprocal requested for a series with vanishing constant term."""


class DegeneratePade(MshemError):
    """Toeplitz denominator system unsolvable at every admissible order."""


class PoleAtEvaluationPoint(MshemError):
    """Pade denominator vanishes at the requested evaluation point."""


class GermNotFound(MshemError):
    """Zero-injection power flow failed; no physical germ exists numerically."""


class SingularEmbeddingMatrix(MshemError):
    """Constant per-order embedding matrix is singular (structural defect)."""


class CorrectionDiverged(MshemError):
    """Error-embedding series at s=1 did not improve on the anchor mismatch."""


class ZeroStep(MshemError):
    """Predictor mismatch exceeds the step tolerance at the smallest probe."""


class StageFailure(MshemError):
    """A trace stage failed even after the bounded step-halving retries."""


class BaseCaseUnsolvable(MshemError):
    """The base-case (lambda=0) power flow does not converge."""


class StallBeforeNose(MshemError):
    """Continuation step cuts hit the floor before reaching the nose."""


class OutOfRange(MshemError):
    """Curve query outside the traced loading interval."""
