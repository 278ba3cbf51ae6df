"""
Exception hierarchy for SphereGaze.

Library code raises these; only the CLI maps them to exit codes.
"""


class SphereGazeError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ConfigError(SphereGazeError):
    """Invalid or unknown configuration value."""

    exit_code = 1


class ShapeError(SphereGazeError):
    """Tensor dimensions do not line up."""

    exit_code = 3

    def __init__(self, op: str, *shapes, detail: str = ""):
        self.op = op
        self.shapes = shapes
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        message = f"{op}: incompatible shapes {rendered}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class NumericError(SphereGazeError):
    """A computation produced NaN or Inf."""

    exit_code = 3


class TapeError(SphereGazeError):
    """Misuse of a gradient tape (re-entry, non-scalar loss)."""

    exit_code = 3


class NonDeterminismError(SphereGazeError):
    """Two forward passes on identical inputs disagreed."""

    exit_code = 3


class DataError(SphereGazeError):
    """Malformed dataset, CSV row or image."""

    exit_code = 2


class CheckpointError(DataError):
    """Unreadable or inconsistent checkpoint file."""

    exit_code = 2


class StatisticsError(SphereGazeError):
    """Degenerate input to a statistical test."""

    exit_code = 3
