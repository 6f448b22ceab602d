"""Exception hierarchy shared by all modules."""


class SpecwnError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SpecwnError, ValueError):
    """A symbol was evaluated at a frequency where it is not defined."""


class UnknownKind(SpecwnError, KeyError):
    """A symbol, field or stopping-time kind is not registered."""


class QuadratureFailure(SpecwnError, ArithmeticError):
    """Adaptive quadrature did not reach its tolerance within budget."""


class DivergentConstant(SpecwnError, ArithmeticError):
    """An assumption constant grows without bound under grid refinement."""

    def __init__(self, names):
        self.names = tuple(names)
        super().__init__("divergent constant(s): " + ", ".join(self.names))


class SupportTooWide(SpecwnError, ValueError):
    """A data field's declared support does not fit inside the basis grid."""


class OverflowGuard(SpecwnError, FloatingPointError):
    """Exponent of the kernel exceeds the safe budget even per step."""


class MissingEnvelope(SpecwnError, ValueError):
    """A random symbol was used where an envelope symbol is required."""


class DriverMismatch(SpecwnError, ValueError):
    """A trajectory is checked against a noise driver it was not built from."""


class TierError(SpecwnError, ValueError):
    """The symbol does not meet the assumption tier required by a command."""


class InsufficientPaths(SpecwnError, RuntimeError):
    """Monte Carlo standard error is too large relative to the bound."""


class ConfigError(SpecwnError):
    """Base class for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError, ValueError):
    """The configuration file is not well-formed."""


class ValidationError(ConfigError, ValueError):
    """The configuration violates the documented schema."""


class UsageError(ConfigError):
    """Unknown subcommand or flag."""


class IoError(SpecwnError, OSError):
    """A report file cannot be written."""
