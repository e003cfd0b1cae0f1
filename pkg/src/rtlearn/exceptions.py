"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class RtlError(Exception):
    """Base class for all errors raised by rtlearn."""


class ConfigError(RtlError, ValueError):
    pass


class DataError(RtlError, ValueError):
    pass


class DimensionError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class NumericalError(RtlError, ArithmeticError):
    pass


class ModelFileError(DataError):
    pass


class ChecksumError(ModelFileError):
    pass


class VersionError(ModelFileError):
    pass


class ModelKindError(ModelFileError, TypeError):
    pass
