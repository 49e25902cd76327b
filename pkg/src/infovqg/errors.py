"""Exception types shared across the package."""


class InfoVQGError(Exception):
    """Base class for all package errors."""


class ConfigError(InfoVQGError, ValueError):
    pass


class SchemaError(InfoVQGError, ValueError):
    pass


class ShapeError(InfoVQGError, ValueError):
    pass


class DataError(InfoVQGError, ValueError):
    pass


class DegenerateDataError(DataError):
    pass


class FormatError(InfoVQGError, ValueError):
    """Raised for corrupt, truncated or mismatched checkpoint files."""


class NonFiniteLossError(InfoVQGError, FloatingPointError):
    def __init__(self, term, step=None):
        self.term = term
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite loss term {term!r}{where}")
