"""Exception hierarchy shared by all modules.

Each error class carries the CLI exit code it maps to.
"""


class MachSurfError(Exception):
    exit_code = 1


class ConfigError(MachSurfError):
    exit_code = 2


class GeometryError(MachSurfError):
    exit_code = 3


class DomainError(GeometryError):
    """Surface parameters or field indices outside their domain."""


class SingularGeometryError(GeometryError):
    """Degenerate tangent plane or fundamental form."""


class FrameError(GeometryError):
    """Feed direction parallel to the surface normal."""


class AxisSingularityError(GeometryError):
    """Tool axis parallel to the normal with R > 0 (flat-bottom contact)."""


class NoOverlapError(GeometryError):
    """Adjacent effective profiles do not intersect (stepover too large)."""


class UnreachablePoseError(MachSurfError):
    exit_code = 4

    def __init__(self, message: str, sample: int | None = None):
        super().__init__(message)
        self.sample = sample


class LocatedError(MachSurfError):
    """Wraps a module error with the (path, sample) where it happened."""

    def __init__(self, cause: MachSurfError, path: int, sample: int):
        super().__init__(f"path {path}, sample {sample}: {cause}")
        self.cause = cause
        self.path = path
        self.sample = sample
        self.exit_code = cause.exit_code
