"""Exception hierarchy; each maps to a CLI exit code."""


class CutprepError(Exception):
    exit_code = 1


class ConfigError(CutprepError):
    """Invalid configuration or user input."""

    exit_code = 2


class InvariantError(CutprepError):
    """An internal invariant or contract was violated."""

    exit_code = 3


class ProtocolError(CutprepError):
    """Inter-rank communication failed to resolve a request."""

    exit_code = 4


class GeometryDomainError(ConfigError):
    """A sampled geometry was queried outside its bounding box."""
