"""
Single-file checkpoints.

Layout (little-endian): magic "UVCK", u32 version, u32 length + model config
JSON, u32 count + named tensors, u32 count + optimizer tensors, u32 length +
metadata JSON. A tensor is u32 name length, UTF-8 name, u8 dtype tag, u32 ndim,
u32 extents and the raw payload. JSON blobs use sorted keys so equal states
encode to equal bytes.
"""

import hashlib
import json
import logging
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, Tuple

import numpy as np

from config import settings
from core.errors import CheckpointError

logger = logging.getLogger(__name__)

# (kind, itemsize) -> tag
DTYPE_TAGS = {("f", 4): 0, ("f", 8): 1, ("i", 8): 2}
TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}

U8 = np.dtype("<u1")
U32 = np.dtype("<u4")


@dataclass
class Checkpoint:
    model_cfg: Dict[str, Any]
    parameters: Dict[str, np.ndarray]
    optimizer: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    metadata: Dict[str, Any] = field(default_factory=dict)


def _u32(*values: int) -> bytes:
    return np.array(values, dtype=U32).tobytes()


def _json_blob(obj: Dict[str, Any]) -> bytes:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _u32(len(payload)) + payload


def _encode_tensor(name: str, array: np.ndarray) -> bytes:
    array = np.asarray(array)
    key = (array.dtype.kind, array.dtype.itemsize)
    if key not in DTYPE_TAGS:
        raise CheckpointError(f"unsupported dtype {array.dtype} for tensor '{name}'")
    tag = DTYPE_TAGS[key]
    encoded = name.encode("utf-8")
    return b"".join([
        _u32(len(encoded)), encoded,
        np.array([tag], dtype=U8).tobytes(),
        _u32(array.ndim), _u32(*array.shape) if array.ndim else b"",
        np.ascontiguousarray(array, dtype=TAG_DTYPES[tag]).tobytes(),
    ])


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [settings.CHECKPOINT_MAGIC, _u32(settings.CHECKPOINT_VERSION), _json_blob(ckpt.model_cfg)]
    for group in (ckpt.parameters, ckpt.optimizer):
        parts.append(_u32(len(group)))
        parts.extend(_encode_tensor(name, array) for name, array in group.items())
    parts.append(_json_blob(ckpt.metadata))
    return b"".join(parts)


class _Cursor:
    def __init__(self, payload: bytes, source: str):
        self.payload = payload
        self.offset = 0
        self.source = source

    def take(self, dtype: np.dtype, count: int) -> np.ndarray:
        size = dtype.itemsize * count
        if self.offset + size > len(self.payload):
            raise CheckpointError(f"{self.source}: truncated checkpoint")
        out = np.frombuffer(self.payload, dtype=dtype, count=count, offset=self.offset)
        self.offset += size
        return out

    def take_bytes(self, n: int) -> bytes:
        if self.offset + n > len(self.payload):
            raise CheckpointError(f"{self.source}: truncated checkpoint")
        out = self.payload[self.offset:self.offset + n]
        self.offset += n
        return out

    def u32(self) -> int:
        return int(self.take(U32, 1)[0])

    def json_blob(self) -> Dict[str, Any]:
        try:
            return json.loads(self.take_bytes(self.u32()).decode("utf-8"))
        except ValueError as e:
            raise CheckpointError(f"{self.source}: corrupt JSON block: {e}") from e

    def tensor(self) -> Tuple[str, np.ndarray]:
        name = self.take_bytes(self.u32()).decode("utf-8")
        tag = int(self.take(U8, 1)[0])
        if tag not in TAG_DTYPES:
            raise CheckpointError(f"{self.source}: unknown dtype tag {tag} for '{name}'")
        ndim = self.u32()
        shape = tuple(int(v) for v in self.take(U32, ndim)) if ndim else ()
        count = int(np.prod(shape)) if shape else 1
        array = self.take(TAG_DTYPES[tag], count).reshape(shape).copy()
        return name, array


def decode_checkpoint(payload: bytes, source: str = "<bytes>") -> Checkpoint:
    cursor = _Cursor(payload, source)
    if cursor.take_bytes(len(settings.CHECKPOINT_MAGIC)) != settings.CHECKPOINT_MAGIC:
        raise CheckpointError(f"{source}: not a checkpoint (bad magic)")
    version = cursor.u32()
    if version != settings.CHECKPOINT_VERSION:
        raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
    model_cfg = cursor.json_blob()
    groups = []
    for _ in range(2):
        group = OrderedDict()
        for _ in range(cursor.u32()):
            name, array = cursor.tensor()
            group[name] = array
        groups.append(group)
    metadata = cursor.json_blob()
    if cursor.offset != len(payload):
        raise CheckpointError(f"{source}: trailing bytes after metadata")
    return Checkpoint(model_cfg=model_cfg, parameters=groups[0], optimizer=groups[1], metadata=metadata)


def save_checkpoint(path: str, ckpt: Checkpoint) -> str:
    """
    Write atomically through a temporary file.

    Returns:
        SHA-256 of the written bytes

    Raises:
        CheckpointError: if writing fails; no partial file is left behind
    """
    payload = encode_checkpoint(ckpt)
    tmp_path = path + ".tmp"
    try:
        with open(tmp_path, "wb") as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except OSError as e:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise CheckpointError(f"cannot write checkpoint '{path}': {e}") from e
    logger.debug(f"Checkpoint written: {path} ({len(payload)} bytes)")
    return hashlib.sha256(payload).hexdigest()


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as f:
            payload = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint '{path}': {e}") from e
    return decode_checkpoint(payload, path)


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
