"""Exception hierarchy. CLI exit codes key off these classes."""


class XaifsError(Exception):
    """Base class for all package errors."""


class ConfigError(XaifsError):
    pass


class DataError(XaifsError):
    """Bad or inconsistent input data."""


class InputError(DataError):
    pass


class SchemaError(DataError):
    pass


class LabelError(DataError):
    pass


class CapabilityError(XaifsError):
    """The model kind does not support the requested operation (e.g. gradients)."""


class ShapeError(XaifsError, ValueError):
    pass
