"""Exception types raised across the package."""


class PlantMotsError(Exception):
    """Base class for all errors raised by plantmots."""


class MalformedRle(PlantMotsError, ValueError):
    pass


class MalformedLine(PlantMotsError, ValueError):
    pass


class DuplicateObjectInFrame(PlantMotsError, ValueError):
    pass


class ShapeFeatureError(PlantMotsError, ValueError):
    """An instance mask whose shape feature cannot be computed."""


class EmptyMask(ShapeFeatureError):
    pass


class TooFewPoints(ShapeFeatureError):
    pass


class DegenerateSignature(ShapeFeatureError):
    """Centroid-distance signature with a vanishing first harmonic."""


class InsufficientPoints(ShapeFeatureError):
    pass


class DegenerateGeometry(ShapeFeatureError):
    pass


class ZeroVector(PlantMotsError, ValueError):
    pass


class NonMonotonicFrameId(PlantMotsError, ValueError):
    pass


class DimensionMismatch(PlantMotsError, ValueError):
    pass


class FrameRangeMismatch(PlantMotsError, ValueError):
    pass


class InvalidConfig(PlantMotsError, ValueError):
    pass
