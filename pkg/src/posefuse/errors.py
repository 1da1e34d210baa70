"""Exception hierarchy shared across the package.

Grouped so the CLI can map failures onto exit codes: usage/config errors,
data-validation errors, and partial pipeline failures are distinct.
"""


class PoseFuseError(Exception):
    """Base class for all package errors."""


class ConfigError(PoseFuseError):
    """Invalid configuration or unusable command-line input."""


class InvalidInputError(PoseFuseError):
    """Input data violates a documented precondition."""


class BehindCameraError(InvalidInputError):
    """A camera-frame point has depth z <= 0 and cannot be projected."""

    def __init__(self, frame_index: int, joint_index: int, depth: float):
        self.frame_index = frame_index
        self.joint_index = joint_index
        self.depth = depth
        super().__init__(
            f"joint {joint_index} of frame {frame_index} is behind the camera "
            f"(z={depth:.3f} mm <= 0)"
        )


class SchemaError(PoseFuseError):
    """A joint schema or schema mapping is structurally invalid."""


class SchemaMismatchError(SchemaError):
    """Two pose containers (or a mapping and its input) disagree on schema."""


class PlacementError(PoseFuseError):
    """An aligned motion cannot be placed validly in the target scene."""


class EmptyCorpusError(PoseFuseError):
    """A pairing policy or filter produced no samples."""


class RankDeficiencyError(PoseFuseError):
    """The unregularized normal equations are singular."""


class MissingChannelError(PoseFuseError):
    """A requested input channel (GT or HPE 2D) is absent from the corpus."""


class AdapterError(PoseFuseError):
    """Base class for generator/detector adapter failures."""


class AdapterFailedError(AdapterError):
    """The adapter process or callable reported failure."""


class FrameCountError(AdapterError):
    """A generator produced a different number of frames than requested."""


class UnreadableOutputError(AdapterError):
    """An adapter output file exists but cannot be decoded."""


class FileFormatError(PoseFuseError):
    """Base class for pose-tensor file format violations."""


class BadMagicError(FileFormatError):
    """File does not start with the pose-tensor magic bytes."""


class UnsupportedVersionError(FileFormatError):
    """File declares a format version this reader does not support."""


class TruncatedFileError(FileFormatError):
    """File ends before the declared payload is complete."""


class NonFinitePayloadError(FileFormatError):
    """Payload contains NaN or infinite values."""


class ManifestError(PoseFuseError):
    """A corpus manifest failed validation."""


class PipelineError(PoseFuseError):
    """The batch pipeline could not produce any usable sample."""
