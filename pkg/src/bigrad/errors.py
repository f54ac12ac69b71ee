"""Exception hierarchy. Every error raised on bad input derives from BigradError."""


class BigradError(Exception):
    """Base class for all library errors."""


class InvalidShapeError(BigradError, ValueError):
    pass


class InvalidRangeError(BigradError, ValueError):
    pass


class ShapeMismatchError(BigradError, ValueError):
    pass


class NonFiniteError(BigradError, FloatingPointError):
    pass


class ConfigError(BigradError, ValueError):
    pass


class BracketError(BigradError, ValueError):
    """The bisection bracket does not straddle a sign change of the derivative."""


class FormatError(BigradError, ValueError):
    pass


class LengthError(BigradError, ValueError):
    pass


class LabelRangeError(BigradError, ValueError):
    pass


class ParseError(BigradError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataFileError(BigradError, OSError):
    pass


class DivergenceError(BigradError, FloatingPointError):
    def __init__(self, epoch, step, detail="non-finite loss"):
        super().__init__(f"diverged at epoch {epoch}, step {step}: {detail}")
        self.epoch = epoch
        self.step = step
