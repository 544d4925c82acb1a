"""Shared exception types."""


class ShapeError(ValueError):
    """Matrix dimensions do not line up for the requested operation."""


class ConfigError(ValueError):
    """Invalid model or adapter configuration."""


class ParseError(ValueError):
    """Malformed input file; message names the offending line or row."""


class DataError(ValueError):
    """A batch lacks the annotations required by the selected task."""


class EvaluationError(ValueError):
    """Gold and predicted sequences cannot be aligned."""


class DegenerateSampleError(ValueError):
    """Paired differences are constant, so the t statistic is undefined."""
