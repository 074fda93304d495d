"""Exception hierarchy shared across the package."""


class DsbfsmError(Exception):
    """Base class for every error raised by this package."""


class DomainError(DsbfsmError, ValueError):
    """An argument lies outside the domain of an operation."""


class OracleSizeError(DomainError):
    """Exhaustive dominance recursion requested on a subset above the cap."""


class DegenerateGraphError(DsbfsmError):
    """The quadratic form x'Wx vanished, so replicator dynamics are undefined."""


class PreconditionError(DomainError):
    """The positivity precondition A(U) > 0 failed for some subset U."""

    def __init__(self, message, subset=None):
        super().__init__(message)
        self.subset = subset


class LoadError(DsbfsmError):
    """A cube, header or label grid could not be read."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SpecError(DomainError):
    """A synthetic-scene description is invalid."""


class EmptyPartitionError(DomainError):
    """A partition request matched no labeled pixel."""


class SplitError(DomainError):
    """A class has too few samples for the requested training size."""

    def __init__(self, message, label=None):
        super().__init__(message)
        self.label = label
