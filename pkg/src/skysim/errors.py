"""Exception hierarchy shared across the simulator."""


class SkySimError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(SkySimError):
    """A scenario config violates an invariant; message names the field."""


class DomainError(SkySimError):
    """An operation was called outside its mathematical domain."""


class ContractError(SkySimError):
    """A caller broke an API contract (wrong shapes, stepping a dead episode)."""


class UnreachableLinkError(SkySimError):
    """A transmission was requested over a zero-rate link; task stays queued."""
