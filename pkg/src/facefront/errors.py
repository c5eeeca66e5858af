"""Exception hierarchy for the facefront package.

Error categories that callers are expected to tell apart (file problems,
schema problems, numerical degeneracies) get their own class; everything
inherits from FacefrontError so CLI code can catch the lot.
"""


class FacefrontError(Exception):
    """Base class for all package-specific errors."""


# --- file / format problems -------------------------------------------------

class MissingFileError(FacefrontError):
    pass


class UnsupportedFormatError(FacefrontError):
    pass


class CorruptDataError(FacefrontError):
    pass


class VersionMismatchError(FacefrontError):
    pass


class TruncatedFileError(FacefrontError):
    pass


class SchemaError(FacefrontError):
    """Landmark/manifest/protocol files that parse but violate their schema."""


# --- geometry / numerical degeneracies ---------------------------------------

class DegenerateCameraError(FacefrontError):
    pass


class MeshError(FacefrontError):
    """Bad mesh data: out-of-range indices, missing texture, count mismatches."""


class TooFewCorrespondencesError(FacefrontError):
    pass


class RankDeficientError(FacefrontError):
    pass


class PointAtInfinityError(FacefrontError):
    pass


# --- descriptors / learners ---------------------------------------------------

class DimensionMismatchError(FacefrontError):
    pass


class SingleClassError(FacefrontError):
    pass


class DegenerateNegativeSetError(FacefrontError):
    pass


class TooFewTrainingImagesError(FacefrontError):
    pass


class DetectorCountError(FacefrontError):
    pass


class DoubleTransformError(FacefrontError):
    """Applying a one-shot transform (e.g. Hellinger sqrt) twice."""


class FoldLeakageError(FacefrontError):
    """Same identity found in train and test of one benchmark fold."""
