"""Exception hierarchy shared across the toolkit."""


class MonoseqError(Exception):
    """Base class for all toolkit errors."""


class CorpusFormatError(MonoseqError):
    """Malformed input data (bad UTF-8, wrong column count, empty source)."""


class DataError(MonoseqError):
    """Training data violates a model contract (e.g. label outside alphabet)."""


class AlignmentError(MonoseqError):
    """A pair cannot be aligned (infeasible lengths or no scoring path)."""


class TrainingError(MonoseqError):
    """Training cannot proceed or produced a non-finite objective."""


class ModelFormatError(MonoseqError):
    """A model file has an unknown magic line, version, or corrupt payload."""
