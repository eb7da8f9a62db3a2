"""Exception hierarchy shared by all modules.

The CLI maps each class onto an exit code, so raise the most specific one.
"""


class AsmfError(Exception):
    """Base class for library errors."""


class ParameterError(AsmfError, ValueError):
    """An argument is outside the range where the operation is defined."""


class DataFormatError(AsmfError, ValueError):
    """An input file or array does not follow the expected layout."""

    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(AsmfError, ArithmeticError):
    """A computation produced non-finite values or an invalid spectrum."""


class ConvergenceError(NumericalError):
    """The eigensolver failed to reach its accuracy target."""

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class NonFiniteGradientError(NumericalError):
    """An oracle returned NaN or Inf."""

    def __init__(self, index, fidelity="hi"):
        super().__init__(f"non-finite {fidelity} gradient at sample {index}")
        self.index = index
        self.fidelity = fidelity


class InvariantViolation(AsmfError):
    """A study produced a result that breaks a guaranteed property."""
