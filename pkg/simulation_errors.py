"""Exceptions raised across the simulator, sweep harness and analysis code."""


class SimulationError(Exception):
    """Base class for every error this package raises on purpose."""


class ParameterError(SimulationError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ConfigError(ParameterError):
    """A configuration document is unreadable, has unknown keys or bad values."""


class SingularDesignError(ParameterError):
    def __init__(self, message, column=None):
        super().__init__(message, field=column)
        self.column = column


class SimulationStateError(SimulationError, RuntimeError):
    """Raised when a simulation is driven past termination or breaks an invariant."""


class RecordParseError(SimulationError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class SweepError(SimulationError, RuntimeError):
    def __init__(self, message, condition_index=None, replicate_index=None):
        super().__init__(message)
        self.condition_index = condition_index
        self.replicate_index = replicate_index
