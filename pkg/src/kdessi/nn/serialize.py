"""Binary model file.

Layout (all integers little-endian u32)::

    b"KDSM" | version | descriptor length | descriptor JSON (utf-8) | float32 blobs

The descriptor holds the architecture config, the ordered tensor list
(name + shape) and free-form metadata.  Blobs follow in descriptor order.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .resnet import Resnet1d, Resnet1dConfig

MAGIC = b"KDSM"
VERSION = 1


def model_to_bytes(model: Resnet1d, metadata: dict | None = None) -> bytes:
    state = model.state_dict()
    descriptor = {
        "architecture": model.config.to_dict(),
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in state.items()],
        "metadata": metadata or {},
    }
    header = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(header)))
    buf.write(header)
    for v in state.values():
        buf.write(np.ascontiguousarray(v, dtype="<f4").tobytes())
    return buf.getvalue()


def model_from_bytes(raw: bytes) -> tuple[Resnet1d, dict]:
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise FormatError("not a model file (bad magic)")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise FormatError(f"unsupported model file version {version}")
    if len(raw) < 12 + hlen:
        raise FormatError("truncated model descriptor")
    try:
        descriptor = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
        config = Resnet1dConfig.from_dict(descriptor["architecture"])
        tensors = descriptor["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"malformed model descriptor: {exc}") from exc

    model = Resnet1d(config)
    expected = {k: v.shape for k, v in model.state_dict().items()}
    listed = [(t["name"], tuple(t["shape"])) for t in tensors]
    if listed != list(expected.items()):
        raise FormatError("descriptor tensors do not match the declared architecture")

    offset = 12 + hlen
    state = {}
    for name, shape in listed:
        n = int(np.prod(shape))
        end = offset + 4 * n
        if end > len(raw):
            raise FormatError(f"truncated tensor data at {name}")
        state[name] = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(shape).astype(np.float32)
        offset = end
    if offset != len(raw):
        raise FormatError("trailing bytes after tensor data")
    model.load_state_dict(state)
    return model, descriptor.get("metadata", {})


def save_model(model: Resnet1d, path, metadata: dict | None = None):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(model_to_bytes(model, metadata))


def load_model(path) -> tuple[Resnet1d, dict]:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"model file not found: {p}")
    return model_from_bytes(p.read_bytes())
