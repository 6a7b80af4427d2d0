"""
Versioned binary checkpoint container.

    magic       8 bytes   b"HPGNCKPT"
    version     u32
    meta_len    u32
    meta        meta_len bytes of UTF-8 JSON, sorted keys:
                adam_t, config, config_hash, rng_state, step
    count       u32
    count records:
        name_len  u16
        name      name_len bytes UTF-8
        ndim      u8
        dims      ndim × u32
        data      prod(dims) × little-endian float32

All integers are little-endian. Parameter records come first in model order,
then optimizer moments named `adam.m.<param>` and `adam.v.<param>`.
"""
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
from pydantic import ValidationError

from .config import TrainConfig, config_hash
from .errors import CheckpointError
from .storage import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"HPGNCKPT"
FORMAT_VERSION = 1
OPTIMIZER_PREFIX = "adam."
_FLOAT = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: TrainConfig
    step: int
    params: Dict[str, np.ndarray]
    optimizer: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0
    rng_state: Dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION
    # per-step training losses of the run that produced this checkpoint; not persisted
    history: List[float] = field(default_factory=list, compare=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def meta(self) -> Dict[str, Any]:
        return {
            "adam_t": self.adam_t,
            "config": self.config.model_dump(mode="json"),
            "config_hash": self.config_hash,
            "rng_state": self.rng_state,
            "step": self.step,
        }

    def to_bytes(self) -> bytes:
        meta = json.dumps(self.meta(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        records = list(self.params.items()) + list(self.optimizer.items())
        chunks = [MAGIC, struct.pack("<II", self.version, len(meta)), meta, struct.pack("<I", len(records))]
        for name, array in records:
            encoded = name.encode("utf-8")
            array = np.ascontiguousarray(array, dtype=_FLOAT)
            chunks.append(struct.pack("<H", len(encoded)) + encoded)
            chunks.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
            chunks.append(array.tobytes())
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "Checkpoint":
        reader = _Reader(payload)
        if reader.take(len(MAGIC)) != MAGIC:
            raise CheckpointError("not an HPGN checkpoint (bad magic bytes)")
        version, meta_len = reader.unpack("<II")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint format version {version} is incompatible with this build (expects {FORMAT_VERSION})"
            )
        try:
            meta = json.loads(reader.take(meta_len).decode("utf-8"))
            config = TrainConfig.model_validate(meta["config"])
        except (ValueError, KeyError, ValidationError) as exc:
            raise CheckpointError(f"checkpoint metadata is unreadable or incompatible: {exc}")
        if config_hash(config) != meta["config_hash"]:
            raise CheckpointError("checkpoint config does not match its recorded hash")

        (count,) = reader.unpack("<I")
        params: Dict[str, np.ndarray] = {}
        optimizer: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = reader.unpack("<H")
            name = reader.take(name_len).decode("utf-8")
            (ndim,) = reader.unpack("<B")
            shape = reader.unpack(f"<{ndim}I")
            size = int(np.prod(shape, dtype=np.int64))
            array = np.frombuffer(reader.take(size * _FLOAT.itemsize), dtype=_FLOAT).reshape(shape).copy()
            (optimizer if name.startswith(OPTIMIZER_PREFIX) else params)[name] = array
        if not reader.exhausted:
            raise CheckpointError("trailing bytes after the last checkpoint record")
        return cls(
            config=config,
            step=meta["step"],
            params=params,
            optimizer=optimizer,
            adam_t=meta["adam_t"],
            rng_state=meta["rng_state"],
            version=version,
        )

    def save(self, path: Union[str, Path]) -> None:
        atomic_write_bytes(path, self.to_bytes())
        logger.info("saved checkpoint %s at step %d", path, self.step)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        try:
            payload = Path(path).read_bytes()
        except FileNotFoundError:
            raise CheckpointError(f"checkpoint not found: {path}")
        return cls.from_bytes(payload)


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    @property
    def exhausted(self) -> bool:
        return self.offset == len(self.payload)

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.payload):
            raise CheckpointError("checkpoint is truncated")
        chunk = self.payload[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))
