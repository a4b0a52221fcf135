"""Exception types raised across the toolkit."""


class LinsingError(Exception):
    """Base class for all toolkit errors."""


class ExpressionError(LinsingError):
    pass


class ParseError(ExpressionError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class UnknownIdentifier(ParseError):
    pass


class ArityError(ParseError):
    pass


class DomainError(ExpressionError):
    """Evaluation left the domain of definition (log of nonpositive, 1/0, ...)."""

    def __init__(self, message, entry=None):
        self.entry = entry
        if entry is not None:
            message = f"{message} at entry {entry}"
        super().__init__(message)


class ShapeError(LinsingError, ValueError):
    pass


class NonFiniteError(LinsingError):
    pass


class InconsistentPoint(LinsingError):
    """The velocity equation A(x) u = b(x) has no solution at x."""


class NotOnFinal(LinsingError):
    def __init__(self, message, classification=None):
        self.classification = classification
        super().__init__(message)


class FinalInconsistency(LinsingError):
    pass


class ProjectionDiverged(LinsingError):
    pass


class StepRejected(LinsingError):
    pass


class SingularJacobian(LinsingError):
    pass


class BundleMapError(LinsingError):
    pass


class KernelNotPreserved(BundleMapError):
    def __init__(self, message, vector=None):
        self.vector = vector
        super().__init__(message)


class NotRegular(LinsingError):
    pass


class NotConsistent(LinsingError):
    pass


class FlowBlowup(LinsingError):
    pass


class NotProjectable(LinsingError):
    pass


class ConfigError(LinsingError):
    pass
