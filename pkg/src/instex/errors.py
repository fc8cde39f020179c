"""Exception hierarchy shared across the engine.

The CLI maps these onto exit codes: ConfigError -> 2, BackendError -> 3,
GeometryError -> 4.
"""


class InstexError(Exception):
    """Base class for all engine errors."""


class ConfigError(InstexError):
    """Bad configuration, CLI arguments, or malformed scene manifest."""


class GeometryError(InstexError):
    """Invalid mesh data: missing UVs, non-finite vertices, degenerate bbox."""


class BackendError(InstexError):
    """Synthesis backend unavailable, misbehaving, or returning bad data."""


class AtlasStateError(InstexError):
    """A texel state transition outside the allowed lifecycle was attempted."""
