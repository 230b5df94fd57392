"""Exception hierarchy shared by all modules."""


class DelayNetError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ValidationError(DelayNetError, ValueError):
    """Input data violates a structural rule.

    ``rule`` names the violated rule (``"Kirchhoff"``, ``"(A4)"``, ...) so that
    callers and the CLI can report it without parsing the message.
    """

    def __init__(self, message, rule=None):
        super().__init__(message)
        self.rule = rule


class KirchhoffViolation(ValidationError):
    def __init__(self, message):
        super().__init__(message, rule="Kirchhoff")


class NonPositiveVelocity(ValidationError):
    def __init__(self, message):
        super().__init__(message, rule="(A1)")


class EmptyGraph(ValidationError):
    def __init__(self, message="graph has no edges"):
        super().__init__(message, rule="EmptyGraph")


class AllocationViolation(ValidationError):
    def __init__(self, message):
        super().__init__(message, rule="allocation")


class DimensionError(ValidationError):
    def __init__(self, message):
        super().__init__(message, rule="dimension")


class OutOfRange(DelayNetError, ValueError):
    pass


class SignalTooShort(DelayNetError, ValueError):
    pass


class HistoryGap(DelayNetError, ValueError):
    pass


class IncompatibleInitialData(ValidationError):
    def __init__(self, message):
        super().__init__(message, rule="compatibility")


class NumericalError(DelayNetError, ArithmeticError):
    exit_code = 4


class NonFiniteState(NumericalError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class TailNotNegligible(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class SingularResolvent(NumericalError):
    pass


class ParseError(DelayNetError, ValueError):
    """Malformed input file; ``line``/``col`` are 1-based when known."""

    def __init__(self, message, path=None, line=None, col=None):
        loc = ""
        if path is not None:
            loc = str(path)
        if line is not None:
            loc += f":{line}" + (f":{col}" if col is not None else "")
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line
        self.col = col
