"""Bit-exact binary grid files and CSV emission.

Grid file layout, all little-endian:

    bytes 0..5   magic "NLRTE1"
    u32          rank
    u32[rank]    dims
    f64[...]     payload, row-major

Round-tripping a finite array through write/read reproduces the payload
bit for bit.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NLRTE1"
_MAX_RANK = 16
_MAX_ELEMENTS = 1 << 34  # refuse absurd allocations on read


class GridFileError(Exception):
    """Base class for grid-file I/O failures; carries the offending path."""

    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


class GridFileFormatError(GridFileError):
    """Bad magic or malformed header."""


class GridFileTruncatedError(GridFileError):
    """File ends before the declared payload."""


class GridFileDimensionError(GridFileError):
    """Declared dimensions overflow sane limits."""


def write_array(values: np.ndarray, path) -> None:
    """Write an array in the NLRTE1 format.  Refuses non-finite data."""
    values = np.ascontiguousarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"refusing to write non-finite values to {path}")
    path = Path(path)
    header = MAGIC + struct.pack("<I", values.ndim)
    header += struct.pack(f"<{values.ndim}I", *values.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(values.astype("<f8", copy=False).tobytes())


def read_array(path) -> np.ndarray:
    """Read an NLRTE1 file back into an array (inverse of write_array)."""
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4:
        raise GridFileTruncatedError(path, "file too short for a header")
    if blob[: len(MAGIC)] != MAGIC:
        raise GridFileFormatError(path, f"bad magic {blob[:len(MAGIC)]!r}")
    (rank,) = struct.unpack_from("<I", blob, len(MAGIC))
    if rank == 0 or rank > _MAX_RANK:
        raise GridFileDimensionError(path, f"rank {rank} out of range 1..{_MAX_RANK}")
    offset = len(MAGIC) + 4
    if len(blob) < offset + 4 * rank:
        raise GridFileTruncatedError(path, "file ends inside the dimension list")
    dims = struct.unpack_from(f"<{rank}I", blob, offset)
    offset += 4 * rank
    count = 1
    for d in dims:
        count *= int(d)
        if count > _MAX_ELEMENTS:
            raise GridFileDimensionError(path, f"dimensions {dims} overflow element limit")
    if len(blob) < offset + 8 * count:
        raise GridFileTruncatedError(
            path, f"payload holds {(len(blob) - offset) // 8} of {count} values")
    flat = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    return flat.reshape(dims).astype(np.float64)


def write_grid_file(field, path) -> None:
    """Write a field container (anything with .values) or bare array."""
    values = getattr(field, "values", field)
    write_array(np.asarray(values), path)


def read_grid_file(path) -> np.ndarray:
    """Read a grid file; callers re-attach grid metadata via the container types."""
    return read_array(path)


def write_csv(path, header: list[str], columns: list[np.ndarray]) -> None:
    """Comma-separated emission for curves: header row, %.17g formatting."""
    columns = [np.atleast_1d(np.asarray(c)) for c in columns]
    if len(columns) != len(header):
        raise ValueError("header and column count mismatch")
    n = len(columns[0])
    if any(len(c) != n for c in columns):
        raise ValueError("columns must have equal length")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join("%.17g" % c[i] for c in columns) + "\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Read back a write_csv file: (header, columns as a 2-d array)."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().rstrip("\n").split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data.T
