"""Exception hierarchy shared across the toolkit."""


class TrapkitError(Exception):
    """Base class for all toolkit errors."""


class InputError(TrapkitError):
    """The caller supplied invalid input; retrying will not help."""


class TransportError(TrapkitError):
    """A remote call failed at the transport level; retriable."""


class CapabilityError(TrapkitError):
    """The provider does not support the requested operation."""


class IntegrityError(TrapkitError):
    """Stored or reconstructed data does not match its record."""
