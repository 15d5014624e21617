"""Exception hierarchy shared across the package."""


class HcbError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(HcbError, ValueError):
    pass


class NumericInputError(HcbError, ValueError):
    pass


class InvalidConfigError(HcbError, ValueError):
    pass


class EmptyInputError(HcbError, ValueError):
    pass


class EmptyCandidatesError(HcbError, ValueError):
    pass


class MissingLabelError(HcbError, KeyError):
    pass


class NotFoundError(HcbError, KeyError):
    pass


class CorruptTreeError(HcbError):
    pass


class ConsistencyError(HcbError):
    """Internal state or cross-object consistency violated."""


class ParseError(HcbError, ValueError):
    """Malformed input file. The message carries line/field context."""
