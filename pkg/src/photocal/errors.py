class CalibrationError(Exception):
    """Base class for calibration failures."""


class DatasetError(CalibrationError):
    """Malformed or missing input files."""


class NotEstimableError(CalibrationError):
    """The data does not constrain the requested parameters."""


class ValidationFailedError(CalibrationError):
    """No estimation round passed exposure validation."""
