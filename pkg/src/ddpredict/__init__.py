"""Data-driven output prediction from noisy input-output data, with confidence regions and a
minimum mean-squared-error predictor."""
from .lti import StateSpaceModel, Trajectory, random_system, simulate
from .predictors import (
    DataDriven,
    GeneralNoise,
    IIDNoise,
    Kind,
    LambdaChoice,
    ModelBased,
    PredictionProblem,
    PredictionResult,
    estimate_gamma,
    predict,
    solve_unified,
)
from .signal_matrix import SignalMatrix, build_hankel, build_page
from .uncertainty import ConfidenceRegion, confidence_region, contains, estimated_mse

__version__ = "0.1.0"
