"""Exception hierarchy shared by all biaxial modules."""


class BiaxialError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(BiaxialError, ValueError):
    """A value violates a documented invariant.

    ``field`` names the offending parameter when one is known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ParseError(BiaxialError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateInput(BiaxialError, ArithmeticError):
    """Retraction input too close to the degenerate set (zero n or m parallel to n)."""


class ConstraintViolated(BiaxialError, ValueError):
    """Director pair is off the manifold |n| = |m| = 1, n.m = 0."""


class StepRejectedRepeatedly(BiaxialError, RuntimeError):
    pass


class NotConverged(BiaxialError, RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class CFLViolated(BiaxialError, ValueError):
    pass


class PoissonNotConverged(BiaxialError, RuntimeError):
    pass


class WindowTooShort(BiaxialError, ValueError):
    pass


class UnknownRecipe(BiaxialError, ValueError):
    pass


class FormatError(BiaxialError, ValueError):
    pass


class TruncatedFile(FormatError):
    pass


class IoError(BiaxialError, OSError):
    """Writing or reading an output file failed."""
