"""Exception hierarchy shared by every ergl module."""


class ERGLError(Exception):
    """Base class for all errors raised by ergl."""


class DimensionError(ERGLError, ValueError):
    pass


class ConfigurationError(ERGLError, ValueError):
    pass


class InputError(ERGLError, ValueError):
    pass


class UsageError(ERGLError, RuntimeError):
    pass


class NonFiniteError(ERGLError, FloatingPointError):
    pass


class ChecksumError(ERGLError, IOError):
    pass


class VersionError(ERGLError, IOError):
    pass


class MalformedFileError(InputError):
    pass


class JoinError(InputError):
    pass


class EmptyDatasetError(InputError):
    pass
