"""Exception types raised by the pointmask library."""


class PointmaskError(Exception):
    """Base class for all library errors."""


# --- file loading -----------------------------------------------------------

class MissingFile(PointmaskError):
    pass


class UnsupportedFormat(PointmaskError):
    pass


class CorruptData(PointmaskError):
    pass


class ParseError(PointmaskError):
    pass


class OutOfRange(PointmaskError):
    pass


# --- score-stack container --------------------------------------------------

class BadMagic(PointmaskError):
    pass


class VersionMismatch(PointmaskError):
    pass


class DimensionOverflow(PointmaskError):
    pass


class TruncatedPayload(PointmaskError):
    pass


# --- pipeline stages --------------------------------------------------------

class EmptyPointSet(PointmaskError):
    pass


class StageMismatch(PointmaskError):
    pass


class DimensionMismatch(PointmaskError):
    pass


class NonPositiveLoss(PointmaskError):
    pass


class ImageTooSmall(PointmaskError):
    pass


class SolverDiverged(PointmaskError):
    pass


class NoSeeds(PointmaskError):
    pass


class EmptyBlob(PointmaskError):
    pass


class EmptyMatrix(PointmaskError):
    pass


class PlacementFailure(PointmaskError):
    pass
