"""Error hierarchy shared by all modules.

Every error carries a stable class name, which the command line prints as a
one-line machine-parseable record on failure.
"""


class GradLREError(Exception):
    """Base class for all package errors."""


class ParseError(GradLREError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SpanOutOfBounds(GradLREError):
    def __init__(self, message, index=None):
        self.index = index
        if index is not None:
            message = f"mention {index}: {message}"
        super().__init__(message)


class InvalidMention(GradLREError):
    pass


class InvalidInventory(GradLREError):
    pass


class InsufficientClassCount(GradLREError):
    pass


class InvalidSplit(GradLREError):
    pass


class UnknownPreset(GradLREError):
    pass


class EmptyLabeledSet(GradLREError):
    pass


class LengthMismatch(GradLREError):
    pass


class RejectedSample(GradLREError):
    pass


class EmptyBatch(GradLREError):
    pass


class NothingMaskable(GradLREError):
    pass


class FillLengthMismatch(GradLREError):
    pass


class EmptyPredictionSet(GradLREError):
    pass


class MissingGold(GradLREError):
    pass


class DegenerateTrajectory(GradLREError):
    pass


class IncompatibleRuns(GradLREError):
    pass


class ConfigError(GradLREError):
    pass


class CheckpointError(GradLREError):
    pass
