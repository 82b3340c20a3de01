"""PRID v1 writer.

Byte layout, little-endian throughout: magic b"PRID"; header u32
version = 1, u32 dim, u64 count; then per record u16 id length, UTF-8
id bytes, u16 label length, UTF-8 label bytes, dim float32 values.
Implemented here from the wire contract, not imported from the engine,
so the cross-package round-trip test exercises real conformance.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import IoFailure

MAGIC = b"PRID"
VERSION = 1
_HEADER = struct.Struct("<IIQ")
_U16 = struct.Struct("<H")


def write_prid(path, records: list[tuple[str, str, np.ndarray]], dim: int) -> None:
    """Write (id, label, values) records atomically."""
    buf = bytearray()
    buf += MAGIC
    buf += _HEADER.pack(VERSION, dim, len(records))
    for rec_id, label, values in records:
        values = np.ascontiguousarray(values, dtype="<f4")
        if values.shape != (dim,):
            raise ValueError(f"record {rec_id!r} has shape {values.shape}, want ({dim},)")
        id_b = rec_id.encode("utf-8")
        label_b = label.encode("utf-8")
        if len(id_b) > 0xFFFF or len(label_b) > 0xFFFF:
            raise IoFailure(f"id/label longer than 65535 bytes for record {rec_id!r}")
        buf += _U16.pack(len(id_b))
        buf += id_b
        buf += _U16.pack(len(label_b))
        buf += label_b
        buf += values.tobytes()
    target = Path(path)
    tmp = target.with_name(target.name + ".tmp")
    try:
        tmp.write_bytes(bytes(buf))
        os.replace(tmp, target)
    except OSError as e:
        raise IoFailure(f"cannot write {target}: {e}") from e
