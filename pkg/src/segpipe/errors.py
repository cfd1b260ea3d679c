"""Exception types shared across the package.

The CLI maps these onto process exit codes, so new error conditions should
reuse one of the classes below rather than raising bare ValueError.
"""


class SegpipeError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(SegpipeError):
    """Bad command line: unknown flag, missing subcommand, bad flag value."""


class DimensionError(SegpipeError):
    """Array shapes are inconsistent with the operation's contract."""


class GeometryError(SegpipeError):
    """Spatial sizes do not produce an integral output geometry."""


class ParameterError(SegpipeError):
    """A numeric or enum parameter is outside its allowed range."""


class NumericError(SegpipeError):
    """Non-finite values where finite ones are required."""


class DataError(SegpipeError):
    """Invalid data content: empty inputs, out-of-range values, bad pairs."""


class LabelError(DataError):
    """A class index lies outside [0, num_classes)."""


class FormatError(SegpipeError):
    """A file does not conform to its documented byte format."""


class ConfigError(SegpipeError):
    """A configuration file contains unknown keys or wrongly typed values."""


class CheckpointError(SegpipeError):
    """A checkpoint file is corrupt, truncated, or version-incompatible."""


class TrainingDivergedError(SegpipeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"training diverged at epoch {epoch}, batch {batch} (loss {loss})"
        )
