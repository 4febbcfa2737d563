"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: config problems exit 2, data/format
problems exit 3, numerical divergence exits 4.
"""


class AvlocError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(AvlocError):
    """Operands or features have incompatible shapes."""


class ContractError(AvlocError):
    """A documented precondition was violated by the caller."""


class ConfigError(AvlocError):
    """An invalid variant, operator, placement, or flag combination."""


class UnavailableFeatureError(AvlocError):
    """An operation needs an optional feature block the input lacks."""


class FormatError(AvlocError):
    """A byte stream does not conform to its declared format.

    `offset` is the byte position where the problem was detected, when
    known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingDivergedError(AvlocError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
