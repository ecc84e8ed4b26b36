"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """A public operation received an argument outside its contract."""


class PreconditionError(RuntimeError):
    """A documented precondition was violated at call time."""


class NumericalFailureError(RuntimeError):
    """A numerical routine could not produce a trustworthy result."""


class ConfigurationError(ValueError):
    """An experiment configuration is invalid or internally inconsistent."""


class InternalError(RuntimeError):
    """An invariant that should be unreachable was violated."""
