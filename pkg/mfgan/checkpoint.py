"""Binary checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic b"MFGANCK1"
    u32       format version
    32 bytes  sha256 digest of the model structure (widths, catalog, factors)
    u32       block count
    blocks    u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
              float32 payload
    u32       meta length
    meta      UTF-8 JSON (sorted keys): stage, counters, optimizer steps,
              rng state

The digest is compared before any block is read, so a checkpoint for a
different model shape is refused without touching model state. Writes go to
a temporary file that is renamed into place.
"""

import hashlib
import json
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .discriminator import FactorTable
from .errors import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"MFGANCK1"
FORMAT_VERSION = 1


@dataclass
class CheckpointData:
    digest: bytes
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: Dict[str, object] = field(default_factory=dict)


def structure_digest(config, num_items: int, tables: Sequence[FactorTable]) -> bytes:
    """Hash of everything that decides parameter shapes."""
    structure = {
        "d": config.d,
        "heads": config.heads,
        "gen_blocks": config.gen_blocks,
        "window": config.window,
        "layer_norm": bool(config.layer_norm),
        "variant": config.variant,
        "num_items": int(num_items),
        "factors": [[t.name, t.kind.value, int(t.size)] for t in tables],
    }
    return hashlib.sha256(json.dumps(structure, sort_keys=True).encode("utf-8")).digest()


def state_arrays(state) -> Dict[str, np.ndarray]:
    """Every array of a trainer state, in a fixed order."""
    arrays: Dict[str, np.ndarray] = {}
    for name, p in state.generator.named_parameters().items():
        arrays[name] = p.data
    for disc in state.discriminators:
        for name, p in disc.named_parameters().items():
            arrays[name] = p.data
    for name, value in state.gen_optimizer.state_arrays().items():
        arrays[f"opt/gen/{name}"] = value
    for j, opt in enumerate(state.disc_optimizers):
        for name, value in opt.state_arrays().items():
            arrays[f"opt/disc{j}/{name}"] = value
    return arrays


def state_meta(state) -> Dict[str, object]:
    return {
        "stage": state.stage,
        "epoch": state.epoch,
        "gen_epochs_done": state.gen_epochs_done,
        "disc_epochs_done": state.disc_epochs_done,
        "round": state.round,
        "best_ndcg": state.best_ndcg,
        "stale_rounds": state.stale_rounds,
        "objectives": list(state.objectives),
        "gen_steps": state.gen_optimizer.step_count,
        "disc_steps": [o.step_count for o in state.disc_optimizers],
        "rng": state.rng.bit_generator.state,
    }


def encode(digest: bytes, arrays: Dict[str, np.ndarray], meta: Dict[str, object]) -> bytes:
    if len(digest) != 32:
        raise CheckpointError("structure digest must be 32 bytes")
    parts: List[bytes] = [MAGIC, struct.pack("<I", FORMAT_VERSION), digest, struct.pack("<I", len(arrays))]
    for name, array in arrays.items():
        raw_name = name.encode("utf-8")
        array = np.asarray(array)
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<B", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(blob)))
    parts.append(blob)
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.buf):
            raise CheckpointError(f"{self.path}: truncated checkpoint (wanted {count} bytes at offset {self.pos})")
        chunk = self.buf[self.pos:self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def save_checkpoint(state, path, digest: bytes) -> str:
    """Write ``state`` atomically to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = encode(digest, state_arrays(state), state_meta(state))
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)
    logger.debug("Saved checkpoint %s (%d bytes)", path, len(payload))
    return str(path)


def load_checkpoint(path, expected_digest: Optional[bytes] = None) -> CheckpointData:
    """Parse a checkpoint file, refusing a wrong magic, version or digest."""
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    reader = _Reader(buf, path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not an mfgan checkpoint (bad magic)")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    digest = reader.take(32)
    if expected_digest is not None and digest != expected_digest:
        raise CheckpointError(f"{path}: checkpoint was written for a different model configuration")

    (count,) = reader.unpack("<I")
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
    (meta_len,) = reader.unpack("<I")
    try:
        meta = json.loads(reader.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt checkpoint metadata") from e
    if reader.pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - reader.pos} unexpected trailing bytes")
    return CheckpointData(digest=digest, arrays=arrays, meta=meta)


def _assign(param, arrays: Dict[str, np.ndarray]) -> None:
    if param.name not in arrays:
        raise CheckpointError(f"checkpoint has no block {param.name}")
    value = arrays[param.name]
    if value.shape != param.shape:
        raise CheckpointError(f"block {param.name} has shape {value.shape}, expected {param.shape}")
    param.data = value.astype(param.dtype)


def restore_state(state, data: CheckpointData):
    """Copy checkpoint arrays and counters into a freshly initialised state."""
    for p in state.generator.named_parameters().values():
        _assign(p, data.arrays)
    for disc in state.discriminators:
        for p in disc.named_parameters().values():
            _assign(p, data.arrays)
    meta = data.meta
    try:
        state.gen_optimizer.load_state_arrays(
            {k[len("opt/gen/"):]: v for k, v in data.arrays.items() if k.startswith("opt/gen/")},
            meta["gen_steps"])
        for j, opt in enumerate(state.disc_optimizers):
            prefix = f"opt/disc{j}/"
            opt.load_state_arrays({k[len(prefix):]: v for k, v in data.arrays.items() if k.startswith(prefix)},
                                  meta["disc_steps"][j])
        state.stage = meta["stage"]
        state.epoch = int(meta["epoch"])
        state.gen_epochs_done = int(meta["gen_epochs_done"])
        state.disc_epochs_done = int(meta["disc_epochs_done"])
        state.round = int(meta["round"])
        state.best_ndcg = float(meta["best_ndcg"])
        state.stale_rounds = int(meta["stale_rounds"])
        state.objectives = [float(x) for x in meta["objectives"]]
        state.rng.bit_generator.state = meta["rng"]
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise CheckpointError(f"checkpoint metadata incomplete: {e}") from e
    return state
