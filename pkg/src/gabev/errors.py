"""Exception hierarchy shared across the package."""


class GabevError(Exception):
    """Base class for every error raised by this package."""


class ContractViolationError(GabevError):
    """An operation was called with arguments that violate its contract."""


class PoseValidationError(ContractViolationError):
    """Rotation matrix is not orthonormal with determinant +1."""


class ProtocolError(GabevError):
    """A policy or the dialogue loop broke the episode protocol."""


class SceneError(GabevError):
    """Invalid scene geometry, or a query made from inside an obstacle."""


class ConfigError(GabevError):
    """Malformed or inconsistent run configuration."""


class FormatError(GabevError):
    """Base class for on-disk format errors."""


class MagicMismatchError(FormatError):
    """File does not start with the expected magic bytes."""


class VersionMismatchError(FormatError):
    """Schema version in the file is not supported."""


class TruncatedFileError(FormatError):
    """File ended before the declared payload was complete."""


class ShapeMismatchError(FormatError):
    """Declared dimensions do not match the expected shape."""


class NonFiniteError(FormatError):
    """Payload contains NaN or infinite values where finite ones are required."""


class MissingFileError(FormatError):
    """A file referenced by a manifest is absent."""
