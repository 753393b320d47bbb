"""Exception types shared across modules."""


class GeometryMismatchError(ValueError):
    """Frame shape differs from the geometry a stream or stage expects."""


class TruncatedFileError(ValueError):
    """A frame container ended before the declared data."""


class UnsupportedDepthError(ValueError):
    """Sample depth other than 8 or 16 bits."""
