"""Exception types shared across the package."""


class DomainError(ValueError):
    """Raised when inputs fall outside an operation's documented domain."""


class InfeasibleEmbeddingError(DomainError):
    """Raised when a non-power gradient cannot be embedded because the
    extended right boundary would exceed a concentration factor of 1."""


class ExecutionError(RuntimeError):
    """Raised when a plan replay consumes a droplet or supply that does
    not exist at that point in the schedule."""
