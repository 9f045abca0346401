"""Exception hierarchy with stable machine-readable codes.

Every error carries a short ``code`` token (used by the CLI for stderr
reporting) and an ``exit_code`` (0 ok, 2 usage, 3 data error, 4 training
divergence, 5 internal).
"""


class KrmapError(Exception):
    code = "internal"
    exit_code = 5


class InvalidInputError(KrmapError):
    code = "invalid-input"
    exit_code = 3


class InvalidDimensionError(KrmapError):
    code = "invalid-dimension"
    exit_code = 3


class BatchTooSmallError(KrmapError):
    code = "batch-too-small"
    exit_code = 3


class InvalidBandwidthError(KrmapError):
    code = "invalid-bandwidth"
    exit_code = 3


class DegenerateDataError(KrmapError):
    code = "degenerate-data"
    exit_code = 3


class InvalidDensityError(KrmapError):
    code = "invalid-density"
    exit_code = 3


class NoValidBandwidthError(KrmapError):
    code = "no-valid-bandwidth"
    exit_code = 3


class EmptyNeighborhoodError(KrmapError):
    """Kernel-weight denominator underflowed; the query sits numerically
    outside every anchor's support."""

    code = "empty-neighborhood"
    exit_code = 3


class SplitConfigError(KrmapError):
    code = "split-config"
    exit_code = 3


class DegenerateBatchError(KrmapError):
    code = "degenerate-batch"
    exit_code = 3


class TooFewPointsError(KrmapError):
    code = "too-few-points"
    exit_code = 3


class InvalidCountError(KrmapError):
    code = "invalid-count"
    exit_code = 3


class InvalidNeighborhoodError(KrmapError):
    code = "invalid-n"
    exit_code = 3


class MapeUndefinedError(KrmapError):
    """Raised when a target is exactly zero; mae/rmse are still available
    on the exception."""

    code = "mape-undefined"
    exit_code = 3

    def __init__(self, message, mae=None, rmse=None):
        super().__init__(message)
        self.mae = mae
        self.rmse = rmse


class DivergedTrainingError(KrmapError):
    code = "diverged-training"
    exit_code = 4

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class DatasetFormatError(KrmapError):
    code = "data-format"
    exit_code = 3


class BadMagicError(DatasetFormatError):
    code = "bad-magic"


class TruncatedFileError(DatasetFormatError):
    code = "truncated"


class NanPayloadError(DatasetFormatError):
    code = "nan-payload"

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class TooFewRowsError(DatasetFormatError):
    code = "too-few-rows"


class BadHeaderError(DatasetFormatError):
    code = "bad-header"


class DuplicateIdError(DatasetFormatError):
    code = "duplicate-id"


class VersionMismatchError(DatasetFormatError):
    code = "version-mismatch"


class DimensionMismatchError(KrmapError):
    code = "dimension-mismatch"
    exit_code = 3
