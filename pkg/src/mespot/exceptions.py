"""Exception hierarchy shared by every stage of the spotting pipeline."""


class MespotError(Exception):
    """Base class for all errors raised by mespot."""


class DimensionMismatchError(MespotError, ValueError):
    pass


class FrameIOError(MespotError, OSError):
    """A frame file could not be read or is truncated."""


class EmptyVideoError(MespotError, ValueError):
    pass


class FormatError(MespotError, ValueError):
    """A text input (CSV, key=value) does not follow its documented layout."""


class EmptyTrackError(MespotError, ValueError):
    pass


class InvalidIntervalError(MespotError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class UnknownDatasetError(MespotError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown dataset"


class DegenerateFaceError(MespotError, ValueError):
    pass


class RoiOutOfFrameError(MespotError, ValueError):
    pass


class TooFewFramesError(MespotError, ValueError):
    pass


class BlockTooSmallError(MespotError, ValueError):
    pass


class VideoTooShortError(MespotError, ValueError):
    pass


class NeedMultipleSubjectsError(MespotError, ValueError):
    pass


class DegenerateTrainingSetError(MespotError, ValueError):
    pass


class SpecError(MespotError, ValueError):
    """A synthetic video description is inconsistent."""
