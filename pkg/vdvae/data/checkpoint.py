"""Binary checkpoint persistence.

Layout (little-endian):
    b"VDVC" | version u32
    3 x (u32 length + UTF-8 key=value text): model config, train config, counters
    u32 tensor count, then per tensor: u16 name length, name, u8 rank, u64 dims, f32 data
    CRC32 u32 over every preceding byte
Tensor names: parameters as-is, "ema/<name>", "opt/m/<name>", "opt/v/<name>",
"norm/mean", "norm/std".
"""
from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import fields
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from ..errors import CheckpointError
from ..model import ModelConfig, VeryDeepVAE

if TYPE_CHECKING:
    from ..training.state import TrainState

logger = logging.getLogger(__name__)

MAGIC = b"VDVC"
VERSION = 1


def dump_key_values(data: dict) -> str:
    lines = []
    for key, value in data.items():
        if isinstance(value, Enum):
            value = value.value
        lines.append(f"{key}={float(value)!r}" if isinstance(value, float) else f"{key}={value}")
    return "\n".join(lines) + "\n"


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CheckpointError(f"line {line_no}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def coerce_fields(cls, raw: dict[str, str]) -> dict:
    """Convert key=value strings to the types of cls's dataclass defaults."""
    defaults = {f.name: f.default for f in fields(cls)}
    out = {}
    for key, value in raw.items():
        if key not in defaults:
            raise CheckpointError(f"unknown {cls.__name__} key {key!r}")
        default = defaults[key]
        if isinstance(default, bool):
            out[key] = value.lower() in ("true", "1", "yes", "on")
        elif isinstance(default, int):
            out[key] = int(value)
        elif isinstance(default, float):
            out[key] = float(value)
        else:
            out[key] = value
    return out


class _Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def u8(self, v: int):
        self.parts.append(struct.pack("<B", v))

    def u16(self, v: int):
        self.parts.append(struct.pack("<H", v))

    def u32(self, v: int):
        self.parts.append(struct.pack("<I", v))

    def u64(self, v: int):
        self.parts.append(struct.pack("<Q", v))

    def raw(self, b: bytes):
        self.parts.append(b)

    def text(self, s: str):
        data = s.encode("utf-8")
        self.u32(len(data))
        self.raw(data)

    def tensor(self, name: str, array: np.ndarray):
        encoded = name.encode("utf-8")
        self.u16(len(encoded))
        self.raw(encoded)
        array = np.asarray(array)
        self.u8(array.ndim)
        for dim in array.shape:
            self.u64(dim)
        self.raw(np.ascontiguousarray(array, dtype="<f4").tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("checkpoint is truncated")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]

    def text(self) -> str:
        return self.take(self.unpack("<I")).decode("utf-8")

    def tensor(self) -> tuple[str, np.ndarray]:
        name = self.take(self.unpack("<H")).decode("utf-8")
        rank = self.unpack("<B")
        shape = tuple(self.unpack("<Q") for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(shape)
        return name, data.astype(np.float32)


def encode_checkpoint(state: TrainState) -> bytes:
    out = _Writer()
    out.raw(MAGIC)
    out.u32(VERSION)
    out.text(dump_key_values(state.model_config.to_dict()))
    out.text(dump_key_values(state.train_config.to_dict()))
    counters = dict(state.counters())
    counters["skipped_steps"] = ";".join(f"{s}:{n!r}" for s, n in state.skipped_steps)
    out.text(dump_key_values(counters))

    tensors: list[tuple[str, np.ndarray]] = []
    tensors += [(name, t.data) for name, t in state.params.items()]
    tensors += [(f"ema/{name}", t.data) for name, t in state.ema.items()]
    tensors += [(f"opt/m/{name}", state.adam_m[name]) for name in state.params.names()]
    tensors += [(f"opt/v/{name}", state.adam_v[name]) for name in state.params.names()]
    tensors += [("norm/mean", state.stats.mean), ("norm/std", state.stats.std)]
    out.u32(len(tensors))
    for name, array in tensors:
        out.tensor(name, array)
    payload = out.getvalue()
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def save_checkpoint(path: str | Path, state: TrainState) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(state)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    logger.info("Saved checkpoint %s (step %d, %d bytes)", path, state.step, len(blob))
    return path


def decode_checkpoint(blob: bytes) -> TrainState:
    from ..training.config import TrainConfig
    from ..training.normalization import NormStats
    from ..training.state import TrainState

    if len(blob) < len(MAGIC) + 8:
        raise CheckpointError("checkpoint is truncated")
    payload, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise CheckpointError("checkpoint CRC32 mismatch")
    reader = _Reader(payload)
    if reader.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version = reader.unpack("<I")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")

    model_config = ModelConfig.from_dict(coerce_fields(ModelConfig, parse_key_values(reader.text())))
    train_config = TrainConfig.from_dict(coerce_fields(TrainConfig, parse_key_values(reader.text())))
    counters = parse_key_values(reader.text())
    tensors = dict(reader.tensor() for _ in range(reader.unpack("<I")))
    if reader.pos != len(payload):
        raise CheckpointError(f"{len(payload) - reader.pos} trailing bytes after tensor table")

    params = VeryDeepVAE(model_config).init_params(0)
    names = params.names()
    try:
        params.load_arrays({name: tensors[name] for name in names})
        ema = params.copy(requires_grad=False)
        ema.load_arrays({name: tensors[f"ema/{name}"] for name in names})
        adam_m = {name: tensors[f"opt/m/{name}"].astype(params[name].dtype) for name in names}
        adam_v = {name: tensors[f"opt/v/{name}"].astype(params[name].dtype) for name in names}
        stats = NormStats(tensors["norm/mean"], tensors["norm/std"])
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing tensor {exc.args[0]!r}") from exc

    skipped = []
    if counters.get("skipped_steps"):
        for item in counters["skipped_steps"].split(";"):
            step, norm = item.split(":", 1)
            skipped.append((int(step), float(norm)))
    state = TrainState(params=params, ema=ema, adam_m=adam_m, adam_v=adam_v, stats=stats,
                       model_config=model_config, train_config=train_config,
                       step=int(counters["step"]), applied_count=int(counters["applied_count"]),
                       skip_count=int(counters["skip_count"]), skipped_steps=skipped)
    return state.check_consistent()


def load_checkpoint(path: str | Path) -> TrainState:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    state = decode_checkpoint(path.read_bytes())
    logger.info("Loaded checkpoint %s (step %d)", path, state.step)
    return state
