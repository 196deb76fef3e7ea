"""Exception types raised by the ocms package.

All errors derive from :class:`OcmsError` and additionally from the built-in
exception a caller would naturally catch, so ``except ValueError`` keeps
working for bad arguments.
"""


class OcmsError(Exception):
    """Root of every error raised by this package."""


class DomainError(OcmsError, ValueError):
    """An argument lies outside the range an operation is defined on."""


class ConfigurationError(OcmsError, ValueError):
    """Estimator parameters or an experiment configuration are invalid.

    The message names the offending field.
    """


class SingularityError(OcmsError, ArithmeticError):
    """A matrix or field element that must be invertible is not."""


class DatasetError(OcmsError, ValueError):
    """A dataset file or generator input is malformed."""


class CodecError(OcmsError, ValueError):
    """A serialized report stream is malformed."""
