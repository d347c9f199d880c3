"""Exception types raised by the library (all subclass ``ValueError``)."""


class SuperBPDError(ValueError):
    pass


class DegenerateSegmentationError(SuperBPDError):
    """A label map with a single region has no boundary to point away from."""


class NoBoundaryError(SuperBPDError):
    pass


class DimensionMismatchError(SuperBPDError):
    pass


class FormatError(SuperBPDError):
    """Malformed or truncated file."""


class UnsupportedVersionError(FormatError):
    pass


class FieldValidationError(SuperBPDError):
    """Direction vectors that are not unit length."""
