"""Exception hierarchy shared by every layer of the package."""


class LssError(Exception):
    """Base class for all errors raised by lssboost."""


class DomainError(LssError, ValueError):
    """A response value lies outside the support of the family."""


class DegenerateDataError(LssError, ValueError):
    """The data do not identify the unconditional fit (e.g. zero variance)."""


class InvalidProbabilityError(LssError, ValueError):
    """A probability level is not strictly inside (0, 1)."""


class UnsupportedFamilyError(LssError):
    """The family is unknown or lacks the requested capability."""


class ColumnMismatchError(LssError, ValueError):
    """Feature columns differ from the ones a model was trained on."""


class NonFiniteError(LssError, FloatingPointError):
    """A gradient, Hessian or deviance became NaN or infinite."""


class DataError(LssError, ValueError):
    """Malformed input data (CSV parsing, missing response values...)."""


class SchemaError(LssError, ValueError):
    """A model file does not match the expected document layout."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path
