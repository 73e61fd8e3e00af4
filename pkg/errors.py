"""
Exception hierarchy for the flashover toolkit
Every error raised on purpose by the pipeline derives from FlashoverError
"""


class FlashoverError(Exception):
    """Base class for all pipeline errors"""


class InvalidArgumentError(FlashoverError, ValueError):
    """Argument outside its documented domain"""


class InsufficientDataError(FlashoverError, ValueError):
    """Not enough samples / rows / records to compute the result"""


class IncompatibleInputError(FlashoverError, ValueError):
    """Input built against a different feature catalog or model layout"""


class DegenerateTargetError(FlashoverError, ValueError):
    """Training target carries no information (e.g. a single class)"""


class WaveformFormatError(InvalidArgumentError):
    """Waveform CSV does not follow the header contract"""
