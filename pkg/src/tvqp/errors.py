"""Exception hierarchy shared by the library and the command line front end."""


class TvqpError(Exception):
    """Base class; the CLI maps any subclass to a nonzero exit status."""


class ConfigError(TvqpError, ValueError):
    """Invalid experiment configuration or inconsistent inputs."""


class PreconditionError(TvqpError, ValueError):
    """An operation was called on data violating its documented precondition."""


class OracleError(TvqpError, RuntimeError):
    """The numerical oracle could not produce the requested quantity."""


class BoundRangeError(TvqpError, ValueError):
    """A bound constant left its admissible range (e.g. step size too large)."""


class NonFiniteTraceError(TvqpError, FloatingPointError):
    """A simulated trace contains NaN or infinite values."""
