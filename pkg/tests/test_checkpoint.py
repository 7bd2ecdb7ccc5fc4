"""Tests for memt5.training.checkpoint module."""

import struct
import zlib
from pathlib import Path

import numpy as np
import pytest

from memt5.exceptions import CheckpointIntegrityError
from memt5.training import (
    Checkpoint,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from memt5.training.checkpoint import FORMAT_VERSION, MAGIC


def _checkpoint() -> Checkpoint:
    rng = np.random.default_rng(0)
    return Checkpoint(
        config={"name": "ckpt", "model.d_model": 16},
        params={
            "shared": rng.standard_normal((4, 3)).astype(np.float32),
            "encoder.final_norm.weight": np.ones(3, dtype=np.float32),
        },
        slots={"shared:row": np.zeros(4, dtype=np.float32)},
        vocab_fingerprint="abc123",
        global_step=17,
        epoch=2,
        batch_in_epoch=3,
        seed=7,
        optimizer="adafactor",
        optimizer_steps=17,
        best_valid_loss=3.25,
    )


class TestEncoding:
    def test_decode_restores_everything(self) -> None:
        original = _checkpoint()
        restored = decode_checkpoint(encode_checkpoint(original))
        assert restored.header() == original.header()
        assert restored.params.keys() == original.params.keys()
        for name, array in original.params.items():
            np.testing.assert_array_equal(restored.params[name], array)
            assert restored.params[name].dtype == np.float32
        np.testing.assert_array_equal(restored.slots["shared:row"], np.zeros(4))

    def test_reencoding_is_byte_identical(self) -> None:
        data = encode_checkpoint(_checkpoint())
        assert encode_checkpoint(decode_checkpoint(data)) == data

    def test_layout_prefix(self) -> None:
        data = encode_checkpoint(_checkpoint())
        assert data.startswith(MAGIC)
        assert struct.unpack("<I", data[5:9])[0] == FORMAT_VERSION
        assert struct.unpack("<I", data[-4:])[0] == zlib.crc32(data[:-4])

    def test_scalar_parameter(self) -> None:
        checkpoint = Checkpoint(config={}, params={"s": np.array(2.5, dtype=np.float32)})
        restored = decode_checkpoint(encode_checkpoint(checkpoint))
        assert restored.params["s"].shape == ()
        assert float(restored.params["s"]) == 2.5


class TestIntegrity:
    def test_bad_magic(self) -> None:
        with pytest.raises(CheckpointIntegrityError, match="magic"):
            decode_checkpoint(b"NOTACHECKPOINT")

    def test_flipped_byte_fails_crc(self) -> None:
        data = bytearray(encode_checkpoint(_checkpoint()))
        data[len(data) // 2] ^= 0xFF
        with pytest.raises(CheckpointIntegrityError, match="CRC"):
            decode_checkpoint(bytes(data))

    def test_truncated_file(self) -> None:
        data = encode_checkpoint(_checkpoint())
        with pytest.raises(CheckpointIntegrityError):
            decode_checkpoint(data[:-10])
        with pytest.raises(CheckpointIntegrityError, match="truncated"):
            decode_checkpoint(MAGIC + b"\x01\x00\x00\x00")

    def test_unknown_version(self) -> None:
        body = MAGIC + struct.pack("<I", 99) + b"\x00" * 8
        data = body + struct.pack("<I", zlib.crc32(body))
        with pytest.raises(CheckpointIntegrityError, match="version 99"):
            decode_checkpoint(data)


class TestFiles:
    def test_save_is_atomic_and_loadable(self, tmp_path: Path) -> None:
        path = tmp_path / "nested" / "last.ckpt"
        save_checkpoint(_checkpoint(), path)
        assert not path.with_suffix(".ckpt.tmp").exists()
        assert load_checkpoint(path).global_step == 17

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(CheckpointIntegrityError, match="cannot read"):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_corrupt_file_names_path(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"garbage-bytes")
        with pytest.raises(CheckpointIntegrityError, match="bad.ckpt"):
            load_checkpoint(path)
