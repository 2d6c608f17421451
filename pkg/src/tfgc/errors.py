"""Exception types shared across the toolkit."""


class TfgcError(Exception):
    """Base class for all toolkit errors."""


class MissingFrames(TfgcError):
    """A frame directory holds fewer usable frames than requested."""


class DecodeError(TfgcError):
    """An image or audio file could not be decoded."""


class TooFewFrames(TfgcError):
    """An operation that needs at least two frames received fewer."""


class ShapeError(TfgcError):
    """Tensor shapes violate an operation's contract."""


class AlignmentError(TfgcError):
    """Audio and visual features disagree on the number of time steps."""


class AudioTooShort(TfgcError):
    """A waveform is shorter than one encoder hop."""


class SchemaError(TfgcError):
    """A manifest record or checkpoint does not match the expected schema."""


class DataError(TfgcError):
    """A dataset could not be resolved or is unusable."""


class DivergenceError(TfgcError):
    """Training produced a non-finite loss."""
