"""Exception hierarchy shared by the whole package."""


class ResilkitError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ResilkitError, ValueError):
    """A caller-supplied value violates a documented precondition."""


class ConfigurationError(ResilkitError):
    """The model lacks data an operation needs (probabilities, product
    robust sets, ...) or declares data the operation cannot honor."""


class CapacityError(ResilkitError):
    """An enumeration would exceed its configured cap."""


class ModelFormatError(ResilkitError):
    """A model or strategy text file failed to parse or validate.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
