"""Binary checkpoints of named float64 arrays.

Layout (all integers little-endian)::

    magic          b"PBCA1\\n"
    count          uint32
    count times:
        name_len   uint16
        name       UTF-8, name_len bytes
        rank       uint8
        dims       rank x uint32
        values     prod(dims) x float64, row-major

The first array is ``__config__``: the configuration's ``key = value``
lines as UTF-8 bytes, one float64 per byte.
"""
from __future__ import annotations

import io
import logging
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .config import ForecastConfig, parse_lines
from .const import CHECKPOINT_CONFIG_NAME, CHECKPOINT_MAGIC
from .exceptions import ConfigError, ShapeError
from .model import ForecastModel

_LOGGER = logging.getLogger(__name__)

_COUNT = struct.Struct("<I")
_NAME_LEN = struct.Struct("<H")
_RANK = struct.Struct("<B")
_FLOAT = np.dtype("<f8")


def encode_arrays(arrays: Mapping[str, np.ndarray]) -> bytes:
    """Serialize named arrays in mapping order."""
    out = io.BytesIO()
    out.write(CHECKPOINT_MAGIC)
    out.write(_COUNT.pack(len(arrays)))
    for name, array in arrays.items():
        raw_name = name.encode("utf-8")
        values = np.asarray(array, dtype=np.float64)
        out.write(_NAME_LEN.pack(len(raw_name)))
        out.write(raw_name)
        out.write(_RANK.pack(values.ndim))
        out.write(struct.pack(f"<{values.ndim}I", *values.shape))
        out.write(np.ascontiguousarray(values).astype(_FLOAT).tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, payload: bytes) -> None:
        self.payload = payload
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise ConfigError(f"Checkpoint truncated at byte {self.offset} (needs {size} more)")
        chunk = self.payload[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct) -> int:
        return fmt.unpack(self.take(fmt.size))[0]


def decode_arrays(payload: bytes) -> dict[str, np.ndarray]:
    """
    Parse named arrays.

    Raises:
        ConfigError: On a bad magic, truncation, trailing bytes or a repeated name

    """
    if not payload.startswith(CHECKPOINT_MAGIC):
        raise ConfigError("Not a checkpoint: bad magic bytes")
    reader = _Reader(payload)
    reader.take(len(CHECKPOINT_MAGIC))
    count = reader.unpack(_COUNT)
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            name = reader.take(reader.unpack(_NAME_LEN)).decode("utf-8")
        except UnicodeDecodeError as err:
            raise ConfigError(f"Checkpoint array name is not UTF-8: {err}") from err
        if name in arrays:
            raise ConfigError(f"Checkpoint repeats array {name!r}")
        rank = reader.unpack(_RANK)
        dims = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        values = np.frombuffer(reader.take(size * _FLOAT.itemsize), dtype=_FLOAT)
        arrays[name] = values.astype(np.float64).reshape(dims)
    if reader.offset != len(payload):
        raise ConfigError(f"Checkpoint has {len(payload) - reader.offset} trailing bytes")
    return arrays


def save(model: ForecastModel, path: str | Path) -> None:
    """Write a model and its configuration."""
    text = "\n".join(model.config.to_lines()).encode("utf-8")
    arrays: dict[str, np.ndarray] = {CHECKPOINT_CONFIG_NAME: np.frombuffer(text, dtype=np.uint8).astype(np.float64)}
    arrays.update(model.params)
    Path(path).write_bytes(encode_arrays(arrays))
    _LOGGER.info("Saved %s checkpoint with %d arrays to %s", model.config.variant, len(arrays), path)


def load(path: str | Path) -> ForecastModel:
    """
    Read a model written by :func:`save`.

    Raises:
        ConfigError: If the file is unreadable, corrupt or inconsistent

    """
    try:
        payload = Path(path).read_bytes()
    except OSError as err:
        raise ConfigError(f"Cannot read checkpoint {path}: {err}") from err
    arrays = decode_arrays(payload)
    if next(iter(arrays), None) != CHECKPOINT_CONFIG_NAME:
        raise ConfigError(f"Checkpoint {path} does not start with {CHECKPOINT_CONFIG_NAME}")
    raw = arrays.pop(CHECKPOINT_CONFIG_NAME)
    try:
        text = bytes(raw.astype(np.uint8)).decode("utf-8")
    except UnicodeDecodeError as err:
        raise ConfigError(f"Checkpoint configuration is not UTF-8: {err}") from err
    config = ForecastConfig.from_mapping(parse_lines(text.splitlines()))
    try:
        model = ForecastModel(config=config, params=arrays)
    except ShapeError as err:
        raise ConfigError(f"Checkpoint {path} does not match its configuration: {err}") from err
    _LOGGER.info("Loaded %s checkpoint from %s", config.variant, path)
    return model
