"""Binary checkpoint container.

Layout: magic ``HGCK``, version u32, then for each parameter in sorted
name order: name-length u32, UTF-8 name, rank u32, dims u32 each, then
the row-major float32 payload. All integers and floats little-endian.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ValidationError
from .tensor import Parameter

MAGIC = b"HGCK"
VERSION = 1


def save_checkpoint(path, params: list[Parameter]):
    by_name = {}
    for p in params:
        if p.name in by_name:
            raise ValidationError(f"duplicate parameter name {p.name!r}")
        by_name[p.name] = p
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        for name in sorted(by_name):
            data = np.ascontiguousarray(by_name[name].data, dtype="<f4")
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", data.ndim))
            for dim in data.shape:
                f.write(struct.pack("<I", dim))
            f.write(data.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValidationError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    off = 8
    while off < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape)
        off += 4 * count
        if name in out:
            raise ValidationError(f"{path}: duplicate parameter {name!r}")
        out[name] = np.array(arr)
    return out


def restore_parameters(params: list[Parameter], state: dict[str, np.ndarray]):
    """Write checkpoint arrays into live parameters, validating coverage."""
    names = {p.name for p in params}
    missing = names - set(state)
    extra = set(state) - names
    if missing or extra:
        raise ValidationError(
            f"checkpoint/model parameter mismatch (missing {sorted(missing)}, unexpected {sorted(extra)})"
        )
    for p in params:
        arr = state[p.name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise ValidationError(
                f"parameter {p.name!r} shape {arr.shape} != model shape {p.data.shape}"
            )
        p.data = arr.astype(p.data.dtype)
