"""Exception types shared across the package."""


class MriFoundryError(Exception):
    """Base class for all package errors."""


class NiftiFormatError(MriFoundryError):
    """File is not a readable NIfTI-1 volume (bad magic, malformed layout)."""


class UnsupportedDtypeError(NiftiFormatError):
    """NIfTI datatype code outside the supported {int16, float32, uint16} set."""


class CorruptHeaderError(NiftiFormatError):
    """Header fields are internally inconsistent (non-positive pixdim, bad dims)."""


class GeometryError(MriFoundryError):
    """Slice stack or volume pair with inconsistent geometry."""


class SpacingError(GeometryError):
    """Slice positions are irregular beyond tolerance."""


class OrientationError(MriFoundryError):
    """Malformed or unsupported axis-orientation code."""


class ManifestError(MriFoundryError):
    """Dataset manifest failed parsing or validation."""


class DataError(MriFoundryError):
    """Voxel data violates a precondition (NaN/Inf, out-of-range values)."""


class MetadataError(MriFoundryError):
    """Imaging metadata is incomplete or invalid."""


class ShapeError(MriFoundryError):
    """Tensor shape does not satisfy an operation's contract."""


class ConfigError(MriFoundryError):
    """Invalid model or training configuration."""


class TransferError(MriFoundryError):
    """Strict encoder weight transfer failed (missing or mismatched keys)."""


class ScheduleError(MriFoundryError):
    """Learning-rate schedule queried outside its valid step range."""


class BatchSizeError(MriFoundryError):
    """Batch too small for the requested loss (log-ratio needs triplets)."""


class LabelError(MriFoundryError):
    """Class id outside the configured label range."""


class DivergenceError(MriFoundryError):
    """Training produced a non-finite loss."""


class CheckpointError(MriFoundryError):
    """Checkpoint file unreadable or incompatible."""


class IntegrityError(CheckpointError):
    """Checkpoint payload truncated or checksum mismatch."""


class CompatibilityError(CheckpointError):
    """Checkpoint belongs to a different configuration."""


class PlacementError(MriFoundryError):
    """Phantom object could not be placed without full overlap."""


class EvalError(MriFoundryError):
    """Evaluation input missing required ground truth."""
