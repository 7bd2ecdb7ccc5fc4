"""Exceptions for the memt5 package."""


class MemT5Error(Exception):
    """Base exception for every memt5 error."""

    pass


class ConfigurationError(MemT5Error):
    """Configuration error (bad value, unknown key, variant mismatch)."""

    pass


class CompatibilityError(ConfigurationError):
    """A checkpoint, vocabulary or config do not belong together."""

    pass


class ShapeError(MemT5Error, ValueError):
    """Tensor dimensions do not line up for an operation."""

    pass


class AttentionMaskError(MemT5Error):
    """An attention row has no allowed key (malformed mask)."""

    pass


class TokenizerError(MemT5Error):
    """Tokenizer training, encoding or decoding failed."""

    pass


class CorpusTooSmallError(TokenizerError):
    """The training corpus cannot produce the requested vocabulary size."""

    def __init__(self, requested: int, achievable: int) -> None:
        super().__init__(
            f"corpus too small for vocab_size={requested}; achievable size is {achievable}"
        )
        self.requested = requested
        self.achievable = achievable


class DataError(MemT5Error):
    """Corpus or dataset could not be read or used."""

    pass


class SchemaValidationError(DataError):
    """A dataset record violates the expected schema."""

    pass


class CapacityError(DataError):
    """Input does not fit the configured source capacity."""

    pass


class NumericalError(MemT5Error):
    """Non-finite values surfaced in a forward pass, gradient or loss."""

    pass


class CheckpointError(MemT5Error):
    """Base class for checkpoint failures."""

    pass


class CheckpointIntegrityError(CheckpointError):
    """Checkpoint magic, version, length or CRC is wrong."""

    pass


class CheckpointMismatchError(CheckpointError):
    """Checkpoint tensor shapes disagree with the model being restored."""

    pass


class VerificationError(MemT5Error):
    """An oracle comparison or gradient check failed."""

    pass


class RunLockedError(MemT5Error):
    """Another process holds the lock on the run output directory."""

    pass
