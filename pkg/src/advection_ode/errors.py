"""Exception hierarchy shared by the package and mapped to CLI exit codes."""


class AdvectionODEError(Exception):
    exit_code = 1


class ConfigError(AdvectionODEError):
    """Invalid configuration. ``path`` is the dotted field path, when known."""

    exit_code = 2

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DataError(AdvectionODEError):
    exit_code = 3


class IngestionError(DataError):
    def __init__(self, message, variable=None):
        self.variable = variable
        super().__init__(f"[{variable}] {message}" if variable else message)


class RegionError(DataError):
    pass


class ShapeError(AdvectionODEError, ValueError):
    exit_code = 3


class DomainError(AdvectionODEError, ValueError):
    exit_code = 2


class ModelError(AdvectionODEError):
    exit_code = 4


class LossError(ShapeError):
    pass


class UndefinedScoreError(AdvectionODEError, ArithmeticError):
    pass


class IntegrationError(AdvectionODEError):
    """Non-finite values appeared while integrating.

    Carries the step index, the first offending (batch, channel, row, col)
    index and, when available, the last finite state.
    """

    exit_code = 4

    def __init__(self, message, step=None, index=None, last_state=None, epoch=None):
        self.step = step
        self.index = index
        self.last_state = last_state
        self.epoch = epoch
        super().__init__(message)
