"""
Error hierarchy shared by the estimation services.

Every error derives from ValueError so callers that only guard against bad
input keep working; the CLI and HTTP layers map the subclasses to exit codes
and status codes.
"""


class LMRegressionError(ValueError):
    """Base class for all toolkit errors."""


class DomainError(LMRegressionError):
    """A parameter lies outside the open interval on which a formula is defined."""


class LengthMismatchError(LMRegressionError):
    """Paired series do not have the same length."""


class SingularDesignError(LMRegressionError):
    """The sample moment matrix A_n is not numerically invertible."""


class DegenerateError(LMRegressionError):
    """A scale, periodogram or process needed by an estimator is identically zero."""


class DegenerateTestError(DegenerateError):
    """The lack-of-fit statistic is undefined because sup|J_n| is zero."""


class OutOfSupportError(LMRegressionError):
    """Evaluation point too far from the design mean for the density factor."""


class BoundaryError(LMRegressionError):
    """Parameters sit on the excluded boundary H = (1 + h) / 2."""


class SimulationError(LMRegressionError):
    """Exact simulation failed (embedding and fallback both unusable)."""


class DataIngestionError(LMRegressionError):
    """An input data file could not be parsed."""


class InsufficientDataError(DataIngestionError):
    """Too few usable rows remain after removing missing values."""


class PipelineStageError(LMRegressionError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
