"""
Binary checkpoint format.

    "GZPF" | u32 version | u32 n_arrays
    n_arrays x ( u16 name_len | name (utf-8) | u8 rank | u32 dims[rank] | f64 data, little-endian )
    u32 json_len | json config (utf-8, sorted keys)

All integers are little-endian.
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .config import LARGE, ModelConfig, RunConfig, apply_overrides
from .data import atomic_write_bytes
from .errors import CheckpointError, ConfigError
from .model import BaselineKind, GazeModel, build_model

logger = logging.getLogger(__name__)

MAGIC = b"GZPF"
VERSION = 1


@dataclass
class Checkpoint:
    model: GazeModel
    config: RunConfig


def encode_checkpoint(model: GazeModel, cfg: RunConfig) -> bytes:
    if cfg.model != model.config:
        raise ConfigError("checkpoint config does not match the model architecture")
    named = model.params.named()
    parts = [MAGIC, struct.pack("<II", VERSION, len(named))]
    for name in sorted(named):
        data = np.ascontiguousarray(named[name].data, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", data.ndim) + struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    blob = json.dumps({"kind": model.kind.value, "config": cfg.to_dict()}, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(blob)) + blob)
    return b"".join(parts)


def save_checkpoint(model: GazeModel, cfg: RunConfig, path: Union[str, Path]) -> None:
    atomic_write_bytes(path, encode_checkpoint(model, cfg))
    logger.info("Saved %s checkpoint (%d parameters) to %s", model.kind.value, model.params.count(), path)


class _Reader:
    def __init__(self, payload: bytes, path: str):
        self.payload = payload
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.payload):
            raise CheckpointError(f"{self.path}: truncated while reading {what} at byte {self.pos}")
        chunk = self.payload[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(payload: bytes, path: str = "<bytes>") -> Tuple[List[Tuple[str, np.ndarray]], Dict[str, Any]]:
    """Raw arrays in file order and the config blob."""
    reader = _Reader(payload, path)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    version, count = reader.unpack("<II", "header")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}, expected {VERSION}")
    arrays = []
    for k in range(count):
        (name_len,) = reader.unpack("<H", f"name length of array {k}")
        try:
            name = reader.take(name_len, f"name of array {k}").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: array {k} name is not valid UTF-8") from exc
        (rank,) = reader.unpack("<B", f"rank of '{name}'")
        dims = reader.unpack(f"<{rank}I", f"dims of '{name}'")
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(reader.take(8 * n, f"data of '{name}'"), dtype="<f8").astype(np.float64)
        arrays.append((name, data.reshape(dims)))
    (blob_len,) = reader.unpack("<I", "config length")
    try:
        meta = json.loads(reader.take(blob_len, "config").decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: config blob is not valid JSON") from exc
    if reader.pos != len(payload):
        raise CheckpointError(f"{path}: {len(payload) - reader.pos} trailing bytes after config")
    if not isinstance(meta, dict) or "kind" not in meta or "config" not in meta:
        raise CheckpointError(f"{path}: config blob lacks 'kind' or 'config'")
    return arrays, meta


def _run_config(data: Dict[str, Any]) -> RunConfig:
    sections = dict(data.get("model", {}))
    sections.update({k: v for k, v in data.items() if k != "model"})
    return apply_overrides(LARGE, sections)


def load_checkpoint(path: Union[str, Path], expected: Optional[ModelConfig] = None) -> Checkpoint:
    """Read a checkpoint; with ``expected``, arrays must fit that architecture."""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    arrays, meta = decode_checkpoint(payload, str(path))
    try:
        cfg = _run_config(meta["config"])
        kind = BaselineKind.parse(meta["kind"])
    except ConfigError as exc:
        raise CheckpointError(f"{path}: invalid stored config: {exc}") from exc

    arch = expected if expected is not None else cfg.model
    model = build_model(kind, arch)
    named = model.params.named()
    for name, data in arrays:
        if name not in named:
            raise CheckpointError(f"{path}: unexpected array '{name}' for a {kind.value} model")
        if named[name].shape != data.shape:
            raise CheckpointError(
                f"{path}: shape mismatch for '{name}': file has {data.shape}, model expects {named[name].shape}"
            )
        named[name].data[...] = data
    missing = sorted(set(named) - {name for name, _ in arrays})
    if missing:
        raise CheckpointError(f"{path}: missing array '{missing[0]}'")
    if expected is not None:
        cfg = RunConfig(model=expected, loss=cfg.loss, train=cfg.train)
    logger.debug("Loaded %s checkpoint from %s", kind.value, path)
    return Checkpoint(model, cfg)
