"""Exception types shared across the toolkit.

Each CLI exit code maps onto one of these families, so keep the hierarchy
flat and stable.
"""


class GradsynthError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(GradsynthError):
    """Operand shapes are incompatible for the requested operation."""


class NonFiniteError(GradsynthError):
    """A NaN or Inf appeared in a forward or backward pass."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class GraphError(GradsynthError):
    """Misuse of the autodiff graph (non-scalar backward, double backward)."""


class ContainerError(GradsynthError):
    """A binary container file failed validation (magic, version, payload)."""


class IntegrityError(ContainerError):
    """Payload bytes do not match the manifest checksums."""


class DataError(GradsynthError):
    """Malformed dataset, image file, or grouping configuration."""


class MissingFileError(GradsynthError):
    """A referenced input file or checkpoint does not exist."""


class TrainingDivergedError(GradsynthError):
    """Training loss became non-finite; the last good checkpoint was kept."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
