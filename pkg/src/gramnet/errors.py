"""Exception hierarchy shared by all gramnet modules."""


class GramnetError(Exception):
    """Base class for all errors raised by this package."""


class InvalidShapeError(GramnetError):
    """A tensor shape violates an operation's shape contract."""


class ContractError(GramnetError):
    """An argument violates a documented precondition."""


class CheckpointFormatError(GramnetError):
    """A checkpoint file is malformed, truncated, or has the wrong magic."""


class IncompatibleCheckpointError(GramnetError):
    """A well-formed checkpoint does not match this network architecture."""


class DatasetLayoutError(GramnetError):
    """A dataset directory does not follow the expected train/test layout."""


class ImageDecodeError(GramnetError):
    """An image file could not be decoded."""
