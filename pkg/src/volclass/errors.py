"""Exception hierarchy shared by all volclass modules."""


class VolclassError(Exception):
    """Base class for every error raised by this package."""


class DataError(VolclassError):
    """Input data is malformed or inconsistent (CLI exit code 2)."""


class IoFailure(DataError):
    pass


class BadMeta(DataError):
    pass


class SizeMismatch(DataError):
    pass


class BadBins(DataError):
    pass


class BadFactor(DataError):
    pass


class BadShape(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class EmptySampleSet(DataError):
    pass


class UnknownLabel(DataError):
    pass


class DuplicateClass(DataError):
    pass


class BadMagic(DataError):
    pass


class UnsupportedVersion(DataError):
    pass


class CorruptFile(DataError):
    pass
