"""Binary field snapshots and per-shell CSV export.

Layout (little-endian):

    magic   4 bytes  b"BNSF"
    version u32      1 = single field, 2 = stack along an axis
    N       u32
    box     f64      box_scale
    dealias f64
    -- version 2 only --
    axis    1 byte   b"p" (Borel variable) or b"t" (time)
    pad     3 bytes
    count   u32
    coords  count x f64
    -- data --
    complex128 values, row-major ``(..., N, N, N, 3)``
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BorelNSError
from .spectral import SpectralField, WaveGrid

MAGIC = b"BNSF"
_HEAD = struct.Struct("<4sIIdd")
_AXIS = struct.Struct("<c3xI")


@dataclass
class Snapshot:
    """Decoded snapshot; ``values`` has shape ``(count, 3, N, N, N)``."""

    grid: WaveGrid
    values: np.ndarray
    axis: str | None = None
    coords: np.ndarray | None = None

    def field(self, index: int = 0) -> SpectralField:
        return SpectralField(self.grid, self.values[index].copy(), divergence_free=False)


def encode(grid: WaveGrid, values: np.ndarray, axis: str | None = None,
           coords=None) -> bytes:
    """Serialise one field ``(3, N, N, N)`` or a stack ``(count, 3, N, N, N)``."""
    values = np.asarray(values, dtype=np.complex128)
    n = grid.n
    buf = io.BytesIO()
    if axis is None:
        if values.shape != (3, n, n, n):
            raise BorelNSError("GRID_MISMATCH", f"expected shape (3,{n},{n},{n})")
        buf.write(_HEAD.pack(MAGIC, 1, n, grid.box_scale, grid.dealias_fraction))
        data = np.moveaxis(values, 0, -1)
    else:
        if axis not in ("p", "t"):
            raise BorelNSError("CONFIG_INVALID", "axis must be 'p' or 't'")
        coords = np.asarray(coords, dtype="<f8")
        if values.shape != (coords.size, 3, n, n, n):
            raise BorelNSError("GRID_MISMATCH", "values do not match coords and grid")
        buf.write(_HEAD.pack(MAGIC, 2, n, grid.box_scale, grid.dealias_fraction))
        buf.write(_AXIS.pack(axis.encode(), coords.size))
        buf.write(coords.tobytes())
        data = np.moveaxis(values, 1, -1)
    buf.write(np.ascontiguousarray(data, dtype="<c16").tobytes())
    return buf.getvalue()


def decode(blob: bytes) -> Snapshot:
    """Inverse of :func:`encode`."""
    if len(blob) < _HEAD.size:
        raise BorelNSError("PARSE_ERROR", "snapshot truncated")
    magic, version, n, box, dealias = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BorelNSError("PARSE_ERROR", "bad snapshot magic")
    grid = WaveGrid(n, box, dealias)
    offset = _HEAD.size
    axis = coords = None
    count = 1
    if version == 2:
        tag, count = _AXIS.unpack_from(blob, offset)
        offset += _AXIS.size
        axis = tag.decode()
        coords = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy()
        offset += 8 * count
    elif version != 1:
        raise BorelNSError("PARSE_ERROR", f"unsupported snapshot version {version}")
    expected = count * n**3 * 3
    if len(blob) - offset != 16 * expected:
        raise BorelNSError("PARSE_ERROR", "snapshot payload size mismatch")
    data = np.frombuffer(blob, dtype="<c16", offset=offset).reshape(count, n, n, n, 3)
    values = np.moveaxis(data, -1, 1).astype(np.complex128)
    return Snapshot(grid=grid, values=values, axis=axis, coords=coords)


def write_snapshot(path, grid: WaveGrid, values, axis=None, coords=None) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(grid, values, axis, coords))


def read_snapshot(path) -> Snapshot:
    with open(path, "rb") as fh:
        return decode(fh.read())


def shell_table(v: SpectralField) -> list[tuple[float, int, float, float]]:
    """Rows ``(|k|, mode count, max |v(k)|, rms |v(k)|)`` over the dealiased shells."""
    radii, inverse = v.grid.shells
    mod = np.sqrt(np.sum(np.abs(v.values) ** 2, axis=0)).ravel()
    rows = []
    for i, r in enumerate(radii):
        sel = mod[inverse == i]
        rows.append((float(r), int(sel.size), float(sel.max()), float(np.sqrt(np.mean(sel**2)))))
    return rows
