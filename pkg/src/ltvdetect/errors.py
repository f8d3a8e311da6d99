"""Exception hierarchy shared by all analysis stages."""


class LtvError(Exception):
    """Base class for operational failures of the toolkit."""


class DimensionError(LtvError, ValueError):
    pass


class DomainError(LtvError, ValueError):
    pass


class ParseError(LtvError, ValueError):
    def __init__(self, message, field=None, line=None):
        where = []
        if field is not None:
            where.append(f"field {field!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.field = field
        self.line = line


class IntegrationOverflowError(LtvError, ArithmeticError):
    def __init__(self, t):
        super().__init__(f"non-finite values in matrix ODE solution at t={t:.6g}")
        self.t = t


class StiffnessError(LtvError, ArithmeticError):
    pass


class ConditioningError(LtvError, ArithmeticError):
    pass


class FlowError(LtvError, ArithmeticError):
    pass


class GridError(LtvError, ValueError):
    pass


class TruncationError(LtvError, ArithmeticError):
    pass


class DivergenceError(LtvError, ArithmeticError):
    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class NoGapError(LtvError):
    """Raised when some windowed growth rate does not separate from zero."""

    def __init__(self, message, ranges=None):
        super().__init__(message)
        self.ranges = ranges or {}


class CertificationError(LtvError):
    def __init__(self, message, worst_pair=None):
        super().__init__(message)
        self.worst_pair = worst_pair


class FormError(LtvError, ValueError):
    pass
