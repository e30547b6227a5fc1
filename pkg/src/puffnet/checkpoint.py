"""Binary tensor container.

Layout: ``b"PUFF"``, one version byte, then records of
``name_len:u16 | name:utf-8 | ndim:u8 | dims:u32[ndim] | payload:f32[prod(dims)]``
(all little-endian), then a CRC32 (u32) of the record bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"PUFF"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    body = bytearray()
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        arr = np.asarray(arr, dtype="<f4")
        body += struct.pack("<H", len(raw)) + raw
        body += struct.pack("<B", arr.ndim)
        body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        body += arr.tobytes(order="C")
    return MAGIC + bytes([VERSION]) + bytes(body) + struct.pack("<I", zlib.crc32(body))


def decode_tensors(blob: bytes) -> dict[str, np.ndarray]:
    if len(blob) < 9 or blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic bytes)")
    if blob[4] != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {blob[4]} (expected {VERSION})")
    body = blob[5:-4]
    (crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint is truncated or corrupt (CRC mismatch)")
    out: dict[str, np.ndarray] = {}
    pos = 0
    try:
        while pos < len(body):
            (n,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", body, pos)
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", body, pos)
            pos += 4 * ndim
            count = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * count > len(body):
                raise CheckpointError(f"record {name!r} runs past the end of the file")
            out[name] = np.frombuffer(body, dtype="<f4", count=count, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * count
    except struct.error as exc:
        raise CheckpointError(f"malformed record at byte {pos + 5}: {exc}") from None
    return out


def write_tensors(path, tensors: dict[str, np.ndarray]):
    Path(path).write_bytes(encode_tensors(tensors))


def read_tensors(path) -> dict[str, np.ndarray]:
    return decode_tensors(Path(path).read_bytes())


def text_to_tensor(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float32)


def tensor_to_text(arr: np.ndarray) -> str:
    return arr.astype(np.uint8).tobytes().decode("utf-8")


@dataclass
class Checkpoint:
    version: int
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0
    iteration: int = 0
    config: dict = field(default_factory=dict)


def save_checkpoint(path, model, opt=None, iteration: int = 0, config: dict | None = None):
    """Write model tensors, Adam moments, the iteration counter and a JSON config echo."""
    tensors = {f"model.{n}": t.data for n, t in model.named_tensors()}
    if opt is not None:
        for n, arr in opt.m.items():
            tensors[f"adam.m.{n}"] = arr
        for n, arr in opt.v.items():
            tensors[f"adam.v.{n}"] = arr
        tensors["adam.t"] = np.array(opt.t, dtype=np.float32)
    tensors["meta.iteration"] = np.array(iteration, dtype=np.float32)
    echo = {"model": model.config.to_dict(), **(config or {})}
    tensors["meta.config"] = text_to_tensor(json.dumps(echo, sort_keys=True))
    write_tensors(path, tensors)


def load_checkpoint(path) -> Checkpoint:
    raw = read_tensors(path)
    ck = Checkpoint(version=VERSION, params={})
    for name, arr in raw.items():
        if name.startswith("model."):
            ck.params[name[6:]] = arr
        elif name.startswith("adam.m."):
            ck.adam_m[name[7:]] = arr
        elif name.startswith("adam.v."):
            ck.adam_v[name[7:]] = arr
        elif name == "adam.t":
            ck.adam_t = int(arr)
        elif name == "meta.iteration":
            ck.iteration = int(arr)
        elif name == "meta.config":
            ck.config = json.loads(tensor_to_text(arr))
        else:
            raise CheckpointError(f"unknown tensor name {name!r}")
    return ck


def load_params(model, params: dict[str, np.ndarray]):
    own = dict(model.named_tensors())
    for name, arr in params.items():
        if name not in own:
            raise CheckpointError(f"unknown tensor name {name!r} for this model")
        if own[name].shape != arr.shape:
            raise CheckpointError(f"{name}: checkpoint shape {arr.shape} != model shape {own[name].shape}")
    missing = set(own) - set(params)
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors: {sorted(missing)[:5]}")
    for name, arr in params.items():
        own[name].data[...] = arr


def load_model(path):
    from .model import ModelConfig, PuffNetModel

    ck = load_checkpoint(path)
    model = PuffNetModel(ModelConfig.from_dict(ck.config.get("model", {})))
    load_params(model, ck.params)
    return model, ck
