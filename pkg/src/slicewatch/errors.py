class SlicewatchError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(SlicewatchError, ValueError):
    pass


class InvalidParameterError(SlicewatchError, ValueError):
    pass


class DimensionMismatchError(SlicewatchError, ValueError):
    pass


class InvalidConfigError(SlicewatchError, ValueError):
    pass


class TooFewSamplesError(SlicewatchError, ValueError):
    pass


class NonSymmetricError(SlicewatchError, ValueError):
    pass


class SampleCountError(SlicewatchError, ValueError):
    """Number of samples handed to a step does not match the detector."""


class UnsatisfiableConfigError(SlicewatchError, RuntimeError):
    pass


class InfeasibleEmbeddingError(SlicewatchError, ValueError):
    pass


class CsvFormatError(SlicewatchError, ValueError):
    """Malformed measurement CSV. ``kind`` is one of missing-column,
    non-numeric-feature, missing-value, unordered-time."""

    def __init__(self, kind, message, row=None):
        self.kind = kind
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"{kind}: {message}{where}")
