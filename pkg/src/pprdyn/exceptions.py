"""Exception hierarchy shared across the package."""


class PprDynError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(PprDynError, ValueError):
    pass


class SelfLoopError(InvalidArgumentError):
    """Raised when an edge event connects a node to itself."""


class FormatError(PprDynError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DanglingNodeError(PprDynError):
    """The source node has no neighbors, so its PPR vector is undefined."""


class DegreeZeroError(PprDynError):
    """Edge adjustment touched a node that had degree zero before insertion."""


class IterationLimitError(PprDynError):
    """A solver hit its sweep cap; ``state`` holds the partial result."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class InconsistentStateError(PprDynError):
    pass


class DivergenceError(PprDynError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class DatasetError(PprDynError):
    pass
