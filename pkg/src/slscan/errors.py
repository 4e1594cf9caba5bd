"""Exception hierarchy shared by all scanner stages."""


class ScanError(Exception):
    """Base class for every error raised by this package."""

    category = "scan-error"


class InvalidArgumentError(ScanError):
    """An argument violates a documented precondition."""

    category = "invalid-argument"


class InvalidResolutionError(InvalidArgumentError):
    """A pattern or image resolution is out of the supported range."""

    category = "invalid-resolution"


class BehindCameraError(ScanError):
    """A point to be projected lies on or behind the camera plane."""

    category = "behind-camera"

    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


class InvalidCameraError(ScanError):
    """A camera model is unusable (e.g. singular intrinsic matrix)."""

    category = "invalid-camera"


class InvalidRigError(ScanError):
    """A rig configuration is geometrically unusable."""

    category = "invalid-rig"


class NumericError(ScanError):
    """An iterative numeric routine failed to converge."""

    category = "numeric"

    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class NearParallelError(ScanError):
    """Two rays are too close to parallel to intersect reliably."""

    category = "near-parallel"


class DegenerateInputError(ScanError):
    """Input data has no usable geometric structure (e.g. collinear points)."""

    category = "degenerate-input"


class FormatError(ScanError):
    """A file does not match its documented format."""

    category = "format"


class MissingInputError(ScanError):
    """A required input file or directory does not exist."""

    category = "missing-input"


class LockedOutputError(ScanError):
    """Another invocation holds the lock on the requested output directory."""

    category = "locked-output"
