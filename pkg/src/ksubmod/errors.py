"""Exception hierarchy shared by every module."""


class KSubError(Exception):
    """Base class for all errors raised by ksubmod."""


class GuardRefusal(KSubError):
    """The requested enumeration exceeds the configured state-count guard.

    Raised instead of falling back to sampling: exact oracles are never
    silently approximate.
    """


class DomainError(KSubError, ValueError):
    """A point, vector or dimension lies outside the operation's domain."""


class PreconditionError(KSubError, ValueError):
    """An operation's documented precondition does not hold."""


class ConfigError(KSubError, ValueError):
    """Invalid algorithm configuration (step size, eps, distributions...)."""


class RuleContractError(KSubError):
    """A direction rule emitted a matrix violating the row-sum contract."""


class ParseError(KSubError, ValueError):
    """An instance, point or experiment document could not be parsed."""
