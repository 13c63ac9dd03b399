"""Binary snapshot files.

Layout (little-endian, packed)::

    magic      5 bytes  b"ENSC1"
    n          u32      nodes per axis
    L          f64      box length
    time       f64
    kind       u32      FieldKind tag
    payload    3*n^3 f64, component-major, x index fastest

Scalar fields occupy the first component slot; the other two are zero.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import Grid3, ScalarField, VectorField3

MAGIC = b"ENSC1"
_HEADER = struct.Struct("<5sIddI")


class FieldKind(enum.IntEnum):
    VELOCITY = 0
    VORTICITY = 1
    SCALAR = 2


class SnapshotFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    grid: Grid3
    time: float
    kind: FieldKind
    field: VectorField3 | ScalarField


def encode(field, time: float, kind: FieldKind) -> bytes:
    g = field.grid
    if isinstance(field, ScalarField):
        data = np.zeros((3,) + g.shape)
        data[0] = field.values
    else:
        data = field.values
    # [c, ix, iy, iz] -> x fastest == Fortran order of each component
    payload = np.concatenate([np.asarray(c, dtype="<f8").ravel(order="F") for c in data])
    return _HEADER.pack(MAGIC, g.n, g.L, float(time), int(kind)) + payload.tobytes()


def decode(blob: bytes) -> Snapshot:
    if len(blob) < _HEADER.size:
        raise SnapshotFormatError("truncated header")
    magic, n, L, time, kind = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    g = Grid3(n, L)
    count = 3 * n**3
    body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    if body.size != count:
        raise SnapshotFormatError(f"expected {count} values, found {body.size}")
    comps = body.reshape(3, -1)
    data = np.stack([c.reshape(g.shape, order="F") for c in comps]).astype(float)
    kind = FieldKind(kind)
    field = ScalarField(g, data[0]) if kind is FieldKind.SCALAR else VectorField3(g, data)
    return Snapshot(g, time, kind, field)


def write_snapshot(path, field, time: float, kind: FieldKind = FieldKind.VORTICITY) -> str:
    """Write a snapshot; returns the SHA-256 hex digest of the bytes written."""
    blob = encode(field, time, kind)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def read_snapshot(path) -> Snapshot:
    return decode(Path(path).read_bytes())
