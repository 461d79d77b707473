"""Inverse sampling for bounded random variables: sample-sum thresholds,
exact Bernoulli coverage, a streaming stopping rule and Monte Carlo checks."""

__version__ = "0.1.0"

from .errors import (
    CapExceededError,
    ConvergenceError,
    DomainError,
    InvSampleError,
    RootNotBracketedError,
    StoppingError,
    StreamExhaustedError,
)
from .thresholds import PrecisionSpec, ThresholdReport, threshold_report
from .engine import EstimateReport, StoppingState, run_stream
from .bernoulli import CoverageQuery, Estimator, coverage_probability, minimum_gamma

__all__ = [
    "CapExceededError",
    "ConvergenceError",
    "CoverageQuery",
    "DomainError",
    "EstimateReport",
    "Estimator",
    "InvSampleError",
    "PrecisionSpec",
    "RootNotBracketedError",
    "StoppingError",
    "StoppingState",
    "StreamExhaustedError",
    "ThresholdReport",
    "coverage_probability",
    "minimum_gamma",
    "run_stream",
    "threshold_report",
]
