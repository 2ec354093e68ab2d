"""Exception hierarchy shared by the library and the CLI."""


class OlfuseError(Exception):
    """Base class for all olfuse errors."""


class ContractError(OlfuseError, ValueError):
    """An operation was called outside its documented preconditions."""


class RangeError(ContractError):
    """A value cannot be represented at the requested precision."""


class NetworkError(OlfuseError):
    """A network description is malformed or dimensionally inconsistent."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "")
            message = f"{where}: {message}"
        super().__init__(message)


class PlanningError(OlfuseError):
    """No fusion plan satisfies the requested constraints."""


class SimulationError(OlfuseError):
    """The simulator hit a contract violation (bad plan, overflow, ...)."""
