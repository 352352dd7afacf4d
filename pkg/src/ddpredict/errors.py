"""Exception types raised across the package."""


class DDPredictError(Exception):
    """Base class for all library errors."""


class DimensionError(DDPredictError, ValueError):
    pass


class UnobservableSystem(DDPredictError):
    pass


class LagTooShort(DDPredictError):
    pass


class UnstableSystem(DDPredictError):
    pass


class GenerationFailed(DDPredictError):
    pass


class TrajectoryTooShort(DDPredictError):
    pass


class LengthMismatch(DDPredictError):
    pass


class HankelNotAllowed(DDPredictError):
    pass


class InfeasibleConstraint(DDPredictError):
    pass


class SingularProjection(DDPredictError):
    pass


class MissingQ(DDPredictError):
    pass


class GeneralNoiseUnsupported(DDPredictError):
    pass


class MissingGammaSource(DDPredictError):
    pass


class NonPositiveW(DDPredictError):
    pass


class SingularSigma(DDPredictError):
    pass


class NotTwoDimensional(DDPredictError):
    pass


class FormatError(DDPredictError):
    """A file does not follow the expected on-disk layout."""


class CampaignError(DDPredictError):
    """A Monte Carlo cell failed; carries the offending system index and seed."""

    def __init__(self, index: int, seed_key, cause: Exception):
        self.index = index
        self.seed_key = seed_key
        self.cause = cause
        super().__init__(f"system {index} (seed key {seed_key}): {type(cause).__name__}: {cause}")
