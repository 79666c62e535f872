"""Binary checkpoint format.

Layout (all integers little-endian u32, tensors little-endian float32)::

    b"CMFN" | version | blob(config JSON) | tensors(parameters)
            | blob(training-state JSON) | tensors(optimizer moments)

    blob    = length, utf-8 bytes
    tensors = count, then per tensor: blob(name), rank, dims..., raw data

JSON blobs are canonical (sorted keys, no whitespace), so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np

from .model import CmfnetConfig

MAGIC = b"CMFN"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint file; the message names the byte offset."""


class CheckpointMismatch(ValueError):
    """Checkpoint tensors do not fit the target model."""


@dataclasses.dataclass
class Checkpoint:
    config: CmfnetConfig
    params: dict
    train: dict = dataclasses.field(default_factory=dict)
    moments: dict = dataclasses.field(default_factory=dict)
    version: int = VERSION


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _blob(data):
    return struct.pack("<I", len(data)) + data


def _tensors(named):
    out = [struct.pack("<I", len(named))]
    for name, arr in named.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        out.append(_blob(name.encode("utf-8")))
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def dumps(ckpt):
    return b"".join([
        MAGIC,
        struct.pack("<I", ckpt.version),
        _blob(ckpt.config.to_json().encode("utf-8")),
        _tensors(ckpt.params),
        _blob(canonical_json(ckpt.train).encode("utf-8")),
        _tensors(ckpt.moments),
    ])


def save_checkpoint(path, ckpt):
    Path(path).write_bytes(dumps(ckpt))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"truncated checkpoint at offset {self.pos}: expected {n} bytes of {what}")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def blob(self, what):
        return self.take(self.u32(what + " length"), what)

    def json(self, what):
        start = self.pos
        raw = self.blob(what)
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"invalid {what} at offset {start}: {exc}") from exc

    def tensors(self, what):
        out = {}
        for _ in range(self.u32(what + " count")):
            start = self.pos
            try:
                name = self.blob("tensor name").decode("utf-8")
            except UnicodeDecodeError as exc:
                raise CheckpointError(f"invalid tensor name at offset {start}") from exc
            rank = self.u32("tensor rank")
            if rank > 8:
                raise CheckpointError(f"implausible rank {rank} for {name!r} at offset {start}")
            shape = tuple(self.u32("tensor dim") for _ in range(rank))
            count = int(np.prod(shape, dtype=np.int64))
            data = np.frombuffer(self.take(4 * count, f"tensor {name!r}"), dtype="<f4")
            out[name] = data.astype(np.float32).reshape(shape)
        return out


def loads(buf):
    r = _Reader(bytes(buf))
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} at offset 0 (expected {MAGIC!r})")
    version = r.u32("version")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} at offset 4")
    cfg_offset = r.pos
    try:
        config = CmfnetConfig.from_dict(r.json("config"))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"invalid config at offset {cfg_offset}: {exc}") from exc
    params = r.tensors("parameters")
    train = r.json("training state")
    moments = r.tensors("moments")
    if r.pos != len(r.buf):
        raise CheckpointError(f"trailing bytes at offset {r.pos}")
    return Checkpoint(config, params, train, moments, version)


def load_checkpoint(path):
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        return loads(buf)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from None


def load_params_into(model, params):
    """Copy named arrays into ``model``; the first name or shape mismatch is reported."""
    own = list(model.named_parameters())
    names = list(params)
    for i, (name, p) in enumerate(own):
        if i >= len(names) or names[i] != name:
            raise CheckpointMismatch(f"tensor {name!r} missing from checkpoint or out of order")
        if params[name].shape != p.shape:
            raise CheckpointMismatch(f"tensor {name!r}: checkpoint shape {params[name].shape} != model shape {p.shape}")
    if len(names) > len(own):
        raise CheckpointMismatch(f"unexpected tensor {names[len(own)]!r} in checkpoint")
    for name, p in own:
        p.data = np.array(params[name], dtype=np.float32)


def model_from_checkpoint(ckpt):
    from .model import CMFNet

    model = CMFNet(ckpt.config)
    load_params_into(model, ckpt.params)
    return model
