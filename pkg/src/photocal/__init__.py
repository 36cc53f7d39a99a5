"""Photometric calibration of video sequences from exposure-tagged frames.

Estimates a quadratic inverse camera response and a radial vignette from
point correspondences, validating each stage against exposure metadata.
"""
from .correspondence import MatcherConfig, MatchSet, block_orientation_filter, detect_and_match, load_matches
from .dataset_io import FrameRecord, Sequence, load_sequence, write_estimates
from .errors import CalibrationError, DatasetError, NotEstimableError, ValidationFailedError
from .exposure import estimate_exposure_ratio, validate
from .models import InverseResponse, VignetteModel
from .numerics import SolverConfig, SolverKind, least_squares, solve_saddle
from .pipeline import CalibrationConfig, CalibrationResult, MatchFiles, calibrate
from .simulator import SimConfig, end_to_end_check

__version__ = "0.1.0"

__all__ = [
    "CalibrationConfig",
    "CalibrationError",
    "CalibrationResult",
    "DatasetError",
    "FrameRecord",
    "InverseResponse",
    "MatchFiles",
    "MatchSet",
    "MatcherConfig",
    "NotEstimableError",
    "Sequence",
    "SimConfig",
    "SolverConfig",
    "SolverKind",
    "ValidationFailedError",
    "VignetteModel",
    "block_orientation_filter",
    "calibrate",
    "detect_and_match",
    "end_to_end_check",
    "estimate_exposure_ratio",
    "least_squares",
    "load_matches",
    "load_sequence",
    "solve_saddle",
    "validate",
    "write_estimates",
]
