"""Exception types shared across the toolkit."""


class SqaEvalError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(SqaEvalError):
    """Raised when an input file or record violates the documented format."""


class TranslationError(SqaEvalError):
    """Raised when a translation client fails or breaks its contract."""
