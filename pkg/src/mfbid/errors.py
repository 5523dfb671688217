"""Exception hierarchy shared across the package."""


class MfbidError(Exception):
    """Base class for all package errors."""


class ConfigurationError(MfbidError):
    """Invalid configuration, shapes, or missing artifacts."""


class TrainingError(MfbidError):
    """A forward or backward pass produced non-finite values."""


class TapeConsumedError(MfbidError):
    """backward() was called on a graph whose tape was already consumed."""


class DegenerateBatchError(MfbidError):
    """A survival minibatch cannot produce a well-defined loss."""


class ProtocolError(MfbidError):
    """The auction environment was driven outside its contract."""


class InputError(MfbidError):
    """Malformed user-supplied data (features, logs, manifests)."""
