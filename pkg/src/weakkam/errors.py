"""Exception hierarchy for the weakkam package.

Every error raised on purpose by this package derives from WeakKamError so
callers can catch the whole family at once. The CLI maps ConfigError and
DomainError to exit code 2 (bad inputs) and the rest to exit code 3
(computation failed).
"""


class WeakKamError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(WeakKamError):
    """Invalid configuration: bad keys, bad shapes, out-of-range parameters."""


class DomainError(WeakKamError):
    """A mathematical precondition on an input value is violated."""


class DataError(WeakKamError):
    """Supplied numerical data is malformed (non-finite, negative mass, ...)."""


class SolverError(WeakKamError):
    """The eigenproblem or shortest-path machinery failed to converge."""


class FlowError(WeakKamError):
    """A flow map evaluation failed (Newton stall, integrator stall, ...)."""
