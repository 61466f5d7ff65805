"""Exception hierarchy shared by all modules."""


class DynembError(Exception):
    """Base class. The CLI maps subclasses onto exit codes."""

    exit_code = 2


class ParseError(DynembError):
    def __init__(self, lineno, message):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class EmptyInputError(DynembError):
    pass


class StrideError(DynembError):
    pass


class SplitError(DynembError):
    pass


class ShapeError(DynembError):
    pass


class ConfigError(DynembError):
    exit_code = 1


class EvaluationError(DynembError):
    pass


class NumericalError(DynembError):
    exit_code = 3

    def __init__(self, epoch, timestep, row, learning_rate):
        super().__init__(
            f"non-finite embedding values at epoch {epoch}, timestep {timestep}, "
            f"row {row} (learning rate {learning_rate:.3g})"
        )
        self.epoch = epoch
        self.timestep = timestep
        self.row = row
        self.learning_rate = learning_rate
