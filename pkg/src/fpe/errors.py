"""Exception taxonomy shared across the package."""


class FpeError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(FpeError):
    """A caller violated an operation precondition."""


class ImageIOError(FpeError):
    """An image file could not be read or written."""


class ImageFormatError(FpeError):
    """An image file exists but its content cannot be decoded."""


class TensorFormatError(FpeError):
    """A tensor file exists but its content cannot be decoded."""


class DegenerateHistogramError(FpeError):
    """All histogram mass sits in a single bin; no threshold separates it."""


class EmptyMaskError(FpeError):
    """An operation that needs foreground pixels received an empty mask."""


class FovEstimationError(FpeError):
    """Field-of-view estimation failed on this image."""


class DegenerateLabelsError(FpeError):
    """Both classes are required but the labels contain only one."""


class ResamplingFailureError(FpeError):
    """Bootstrap could not draw class-complete resamples within the retry budget."""


class ManifestError(FpeError):
    """A manifest or prediction file is malformed."""


class ReconciliationError(FpeError):
    """Manifest and predictions disagree; carries the offending ids."""

    def __init__(self, message, ids=()):
        self.ids = tuple(ids)
        if self.ids:
            shown = ", ".join(self.ids[:10])
            more = "" if len(self.ids) <= 10 else f" (+{len(self.ids) - 10} more)"
            message = f"{message}: {shown}{more}"
        super().__init__(message)
