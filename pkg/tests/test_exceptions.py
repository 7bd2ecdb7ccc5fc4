"""Tests for memt5.exceptions module."""

import pytest

from memt5.cli.common import exit_code_for
from memt5.exceptions import (
    AttentionMaskError,
    CapacityError,
    CheckpointError,
    CheckpointIntegrityError,
    CheckpointMismatchError,
    CompatibilityError,
    ConfigurationError,
    CorpusTooSmallError,
    DataError,
    MemT5Error,
    NumericalError,
    RunLockedError,
    SchemaValidationError,
    ShapeError,
    TokenizerError,
    VerificationError,
)


class TestExceptionHierarchy:
    """Tests for exception inheritance hierarchy."""

    @pytest.mark.parametrize(
        "exc_type",
        [
            ConfigurationError,
            ShapeError,
            AttentionMaskError,
            TokenizerError,
            DataError,
            NumericalError,
            CheckpointError,
            VerificationError,
            RunLockedError,
        ],
    )
    def test_everything_derives_from_base(self, exc_type: type[Exception]) -> None:
        assert issubclass(exc_type, MemT5Error)

    def test_compatibility_is_a_configuration_error(self) -> None:
        assert issubclass(CompatibilityError, ConfigurationError)

    def test_shape_error_is_a_value_error(self) -> None:
        assert issubclass(ShapeError, ValueError)

    def test_data_error_family(self) -> None:
        assert issubclass(SchemaValidationError, DataError)
        assert issubclass(CapacityError, DataError)

    def test_checkpoint_family(self) -> None:
        assert issubclass(CheckpointIntegrityError, CheckpointError)
        assert issubclass(CheckpointMismatchError, CheckpointError)

    def test_corpus_too_small_carries_sizes(self) -> None:
        exc = CorpusTooSmallError(requested=500, achievable=420)
        assert isinstance(exc, TokenizerError)
        assert exc.requested == 500
        assert exc.achievable == 420
        assert "achievable size is 420" in str(exc)


class TestExitCodes:
    @pytest.mark.parametrize(
        ("exc", "code"),
        [
            (ConfigurationError("x"), 1),
            (CompatibilityError("x"), 1),
            (RunLockedError("x"), 1),
            (ShapeError("x"), 1),
            (DataError("x"), 2),
            (SchemaValidationError("x"), 2),
            (CheckpointIntegrityError("x"), 2),
            (TokenizerError("x"), 2),
            (NumericalError("x"), 3),
            (VerificationError("x"), 4),
        ],
    )
    def test_mapping(self, exc: MemT5Error, code: int) -> None:
        assert exit_code_for(exc) == code
