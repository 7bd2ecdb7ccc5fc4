"""Single-file binary checkpoints.

Layout (all integers little-endian)::

    b"MEMT5"                     magic
    u32                          format version
    u32 + bytes                  JSON header (run config, vocab fingerprint,
                                 step counters, seed, optimizer kind)
    u32                          parameter count
    records...                   one per parameter
    u32                          optimizer slot count
    records...                   one per slot (``"<param>:<slot>"``)
    u32                          CRC32 of everything above

    record := u32 name length, utf-8 name, u32 rank, rank x u64 dims,
              float32 payload

Records are written in sorted name order and the header is sorted JSON, so
saving a loaded checkpoint reproduces the file byte for byte. Files are
written to a temporary sibling and moved into place.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from memt5.exceptions import CheckpointIntegrityError

MAGIC = b"MEMT5"
FORMAT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass(slots=True)
class Checkpoint:
    config: dict[str, Any]
    params: dict[str, np.ndarray]
    slots: dict[str, np.ndarray] = field(default_factory=dict)
    vocab_fingerprint: str | None = None
    global_step: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0
    seed: int = 42
    optimizer: str | None = None
    optimizer_steps: int = 0
    best_valid_loss: float | None = None

    def header(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "vocab_fingerprint": self.vocab_fingerprint,
            "global_step": self.global_step,
            "epoch": self.epoch,
            "batch_in_epoch": self.batch_in_epoch,
            "seed": self.seed,
            "optimizer": self.optimizer,
            "optimizer_steps": self.optimizer_steps,
            "best_valid_loss": self.best_valid_loss,
        }


# ----- encoding --------------------------------------------------------------


def _encode_records(arrays: dict[str, np.ndarray]) -> bytes:
    parts = [_U32.pack(len(arrays))]
    for name in sorted(arrays):
        array = np.ascontiguousarray(arrays[name], dtype=PAYLOAD_DTYPE)
        encoded = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U64.pack(dim) for dim in array.shape)
        parts.append(array.tobytes())
    return b"".join(parts)


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    header = json.dumps(checkpoint.header(), sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(
        [
            MAGIC,
            _U32.pack(FORMAT_VERSION),
            _U32.pack(len(header)),
            header,
            _encode_records(checkpoint.params),
            _encode_records(checkpoint.slots),
        ]
    )
    return body + _U32.pack(zlib.crc32(body))


# ----- decoding --------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes, limit: int) -> None:
        self._data = data
        self._limit = limit
        self._pos = 0

    def take(self, size: int) -> bytes:
        end = self._pos + size
        if end > self._limit:
            raise CheckpointIntegrityError("checkpoint is truncated")
        chunk = self._data[self._pos : end]
        self._pos = end
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    @property
    def exhausted(self) -> bool:
        return self._pos == self._limit


def _decode_records(reader: _Reader) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        shape = tuple(reader.u64() for _ in range(reader.u32()))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        payload = reader.take(count * PAYLOAD_DTYPE.itemsize)
        arrays[name] = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).reshape(shape).copy()
    return arrays


def decode_checkpoint(data: bytes) -> Checkpoint:
    """Parse checkpoint bytes.

    Raises:
        CheckpointIntegrityError: wrong magic or version, truncation, CRC
            mismatch, or trailing bytes
    """
    if len(data) < len(MAGIC) + 4 or not data.startswith(MAGIC):
        raise CheckpointIntegrityError("not a memt5 checkpoint (bad magic)")
    if len(data) < len(MAGIC) + 12:
        raise CheckpointIntegrityError("checkpoint is truncated")
    body, (crc,) = data[:-4], _U32.unpack(data[-4:])
    reader = _Reader(data, len(body))
    reader.take(len(MAGIC))
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise CheckpointIntegrityError(
            f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )
    if zlib.crc32(body) != crc:
        raise CheckpointIntegrityError("checkpoint CRC mismatch (truncated or corrupted file)")
    try:
        header = json.loads(reader.take(reader.u32()))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointIntegrityError(f"checkpoint header is not valid JSON: {exc}") from exc
    params = _decode_records(reader)
    slots = _decode_records(reader)
    if not reader.exhausted:
        raise CheckpointIntegrityError("unexpected bytes after optimizer slots")
    try:
        return Checkpoint(params=params, slots=slots, **header)
    except TypeError as exc:
        raise CheckpointIntegrityError(f"checkpoint header has unexpected fields: {exc}") from None


# ----- files -----------------------------------------------------------------


def save_checkpoint(checkpoint: Checkpoint, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(checkpoint))
    os.replace(tmp, path)


def load_checkpoint(path: Path) -> Checkpoint:
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointIntegrityError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        return decode_checkpoint(data)
    except CheckpointIntegrityError as exc:
        raise CheckpointIntegrityError(f"{path}: {exc}") from None
