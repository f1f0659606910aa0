"""On-disk formats for fields.

Binary layout (little-endian)::

    offset  size  content
    0       4     magic b"FHHF"
    4       4     uint32 format version (1)
    8       4     uint32 dimension N
    12      4     uint32 points per axis n
    16      8     float64 half-period L
    24      8     reserved, zero
    32      ...   n**N float64 values, row-major

CSV layout: header ``x1[,x2[,x3]],value``, one row per grid point, 17
significant digits.
"""
from __future__ import annotations

import csv
import struct

import numpy as np

from .spectral import Field, SpatialGrid

MAGIC = b"FHHF"
VERSION = 1
_HEADER = struct.Struct("<4sIIId8x")
assert _HEADER.size == 32


def write_field_binary(path, u: Field) -> None:
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.N, g.n, g.L))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_field_binary(path) -> Field:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: file shorter than the 32-byte header")
    magic, version, N, n, L = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    grid = SpatialGrid(N, L, n)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != n**N:
        raise ValueError(f"{path}: expected {n ** N} values, found {body.size}")
    return Field(grid, body.reshape(grid.shape).astype(float))


def write_field_csv(path, u: Field) -> None:
    g = u.grid
    coords = [c.ravel() for c in g.coords()]
    vals = u.values.ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(g.N)] + ["value"])
        for j in range(vals.size):
            w.writerow([f"{c[j]:.17g}" for c in coords] + [f"{vals[j]:.17g}"])
