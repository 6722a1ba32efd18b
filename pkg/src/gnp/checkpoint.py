"""Binary checkpoint format (.gnpc).

Layout, all little-endian:

    magic "GNPC" | u32 version=1 | u32 param count
    per parameter (lexicographic by name):
        u16 name length | UTF-8 name | u8 ndim | u32 * ndim dims | f64 data
    u32 CRC32 of all preceding bytes

The model architecture rides along as scalar ``meta.*`` entries so a
checkpoint is self-describing; loading returns (ModelSpec, values).
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .models import ModelSpec

MAGIC = b"GNPC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode(entries):
    out = bytearray()
    out += MAGIC
    out += struct.pack("<II", VERSION, len(entries))
    for name in sorted(entries):
        arr = np.ascontiguousarray(entries[name], dtype=np.float64)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise CheckpointError(f"parameter name too long: {name!r}")
        if arr.ndim > 0xFF:
            raise CheckpointError(f"too many dimensions for {name!r}")
        out += struct.pack("<H", len(name_b))
        out += name_b
        out += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            out += struct.pack("<I", d)
        out += arr.astype("<f8").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def save_checkpoint(path, spec, values):
    entries = dict(values)
    overlap = [k for k in entries if k.startswith("meta.")]
    if overlap:
        raise CheckpointError(f"parameter names may not start with 'meta.': {overlap}")
    entries.update(spec.to_meta())
    data = _encode(entries)
    with open(path, "wb") as fh:
        fh.write(data)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a GNPC checkpoint")
    body, crc_bytes = raw[:-4], raw[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise CheckpointError(f"{path}: CRC mismatch, file corrupted")
    version, count = struct.unpack_from("<II", body, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 12
    entries = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", body, offset)
        offset += 2
        name = body[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", body, offset)
        offset += 1
        dims = struct.unpack_from(f"<{ndim}I", body, offset) if ndim else ()
        offset += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(body, dtype="<f8", count=n, offset=offset).reshape(dims)
        offset += 8 * n
        entries[name] = arr.astype(np.float64)
    if offset != len(body):
        raise CheckpointError(f"{path}: trailing bytes after last parameter")
    meta = {k: v for k, v in entries.items() if k.startswith("meta.")}
    values = {k: v for k, v in entries.items() if not k.startswith("meta.")}
    if not meta:
        raise CheckpointError(f"{path}: missing model meta entries")
    spec = ModelSpec.from_meta(meta)
    return spec, values
