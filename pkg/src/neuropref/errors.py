"""Exception hierarchy for the neuropref pipeline.

Every domain failure derives from :class:`NeuroprefError`, so callers (and
the CLI) can distinguish domain errors (exit code 1) from usage errors
(exit code 2) and genuine bugs.
"""


class NeuroprefError(Exception):
    """Base class for all domain errors raised by this package."""


class IngestError(NeuroprefError):
    """Session directory or stream data violates an ingest contract."""


class MissingStreamError(NeuroprefError):
    """Session lacks a required EEG or eye stream."""


class OutOfRangeError(NeuroprefError):
    """A scalar input falls outside its documented range."""


class NyquistViolationError(NeuroprefError):
    """Filter band edge at or above the Nyquist frequency."""


class NotConvergedError(NeuroprefError):
    """An iterative solver exhausted its iteration budget."""


class TooShortError(NeuroprefError):
    """Signal shorter than the minimum an operation requires."""


class InsufficientLuminanceError(NeuroprefError):
    """Too few trials carry a luminance value for reflex regression."""


class NoValidPupilError(NeuroprefError):
    """Both pupil channels invalid for most of the epoch."""


class NoValidGazeError(NeuroprefError):
    """No valid gaze samples available in the epoch."""


class FeatureExtractionError(NeuroprefError):
    """Trial quality flags forbid feature extraction."""


class DegenerateLabelsError(NeuroprefError):
    """Labels contain a single class where both are required."""


class SingleClassError(DegenerateLabelsError):
    """Training set contains only one class."""


class ColumnMismatchError(NeuroprefError):
    """A feature vector does not carry the columns a model expects."""


class KOutOfRangeError(NeuroprefError):
    """Requested top-k outside [1, n_features]."""


class TooFewSamplesError(NeuroprefError):
    """Not enough samples for the requested fold structure."""


class UnstratifiableFoldsError(NeuroprefError):
    """Could not deal folds with both classes present in each."""


class InsufficientPairsError(NeuroprefError):
    """Fewer than three pairs available for a correlation."""


class InvalidConfigError(NeuroprefError):
    """Configuration file or generator config is malformed."""


class PipelineStageError(NeuroprefError):
    """A pipeline stage failed; carries the stage name for the run log."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
