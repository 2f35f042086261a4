"""Exception types raised across the package."""


class SwarmError(Exception):
    """Base class for all package errors."""


class EmptyPointSet(SwarmError, ValueError):
    pass


class SpawnFailed(SwarmError, RuntimeError):
    pass


class ActionCountMismatch(SwarmError, ValueError):
    pass


class LengthMismatch(SwarmError, ValueError):
    pass


class SizeMismatch(SwarmError, ValueError):
    pass


class Diverged(SwarmError, FloatingPointError):
    """Training loss became non-finite."""


class CheckpointNotFound(SwarmError, FileNotFoundError):
    pass


class ConfigMismatch(SwarmError, ValueError):
    pass
