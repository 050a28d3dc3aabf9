"""Exception hierarchy shared across the simulator."""


class SimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(SimError):
    """A scenario or platform configuration is invalid."""


class DomainError(SimError):
    """An argument is outside its documented domain."""


class PlacementError(SimError):
    """Replica placement cannot satisfy its constraints."""


class EngineError(SimError):
    """The event loop reached a state that should be unreachable."""


class IoError(SimError):
    """Reading or writing an artifact file failed; message names the path."""
