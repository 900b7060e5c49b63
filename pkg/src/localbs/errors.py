"""Exception hierarchy shared by the library and the CLI."""


class InputError(ValueError):
    """Caller supplied an invalid argument (CLI exit code 1)."""


class GraphConstructionError(InputError):
    """Graph input is ill-formed, or the graph is disconnected."""


class InsufficientDataError(InputError):
    """Not enough observations to form the requested estimate."""

    def __init__(self, message, horizon=None):
        super().__init__(message)
        self.horizon = horizon


class StatisticalTestFailure(RuntimeError):
    """A verification test rejected its null hypothesis (CLI exit code 2)."""

    def __init__(self, message, failing=(), output=None):
        super().__init__(message)
        self.failing = list(failing)
        self.output = output


class InternalError(RuntimeError):
    """Broken invariant, iteration cap hit, or similar (CLI exit code 3)."""
