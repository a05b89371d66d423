"""
On-disk formats: DSGF grid binaries, CSV tables and 16-bit PGM images.
"""
import csv
import logging
import os
import struct

import numpy as np

from .errors import FormatError
from .grid import ScalarField, TorusGrid, coords_of

LOGGER = logging.getLogger(__name__)

DSGF_MAGIC = b"DSGF"
DSGF_VERSION = 1
_DSGF_HEADER = struct.Struct("<4sIIQ")

PGM_MAXVAL = 65535


def write_dsgf(path, field):
    """
    Write a field as DSGF: magic, u32 version, u32 d, u64 n, then n^d
    little-endian float64 values in lexicographic centred order.

    Args:
        path (str):
        field (ScalarField):
    """
    grid = field.grid
    with open(path, "wb") as f:
        f.write(_DSGF_HEADER.pack(DSGF_MAGIC, DSGF_VERSION, grid.dim, grid.n))
        f.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    LOGGER.debug("wrote DSGF %s (d=%d, n=%d)", path, grid.dim, grid.n)


def read_dsgf(path):
    """
    Args:
        path (str):

    Returns:
        ScalarField

    Raises:
        FormatError: on wrong magic, unsupported version or truncated data
    """
    with open(path, "rb") as f:
        header = f.read(_DSGF_HEADER.size)
        if len(header) != _DSGF_HEADER.size:
            raise FormatError(f"{path}: truncated DSGF header")
        magic, version, dim, n = _DSGF_HEADER.unpack(header)
        if magic != DSGF_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {DSGF_MAGIC!r}")
        if version != DSGF_VERSION:
            raise FormatError(f"{path}: unsupported DSGF version {version}")
        grid = TorusGrid(int(dim), int(n))
        payload = f.read()

    if len(payload) != 8 * grid.total:
        raise FormatError(
            f"{path}: expected {8 * grid.total} bytes of values, found {len(payload)}"
        )
    return ScalarField(grid, np.frombuffer(payload, dtype="<f8"))


def write_csv(path, header, rows):
    """
    Write an RFC-4180 style CSV with a header row, UTF-8, '.' decimals.

    Args:
        path (str):
        header (Sequence[str]):
        rows (Iterable[Sequence]):
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\r\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(value) for value in row])
    LOGGER.debug("wrote CSV %s", path)


def _format_cell(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (tuple, list, np.ndarray)):
        return " ".join(str(int(v)) for v in value)
    return value


def field_rows(field):
    """
    Site rows (z_1, ..., z_d, value) in lexicographic order, for CSV export.
    """
    flat = field.values.ravel()
    for idx in range(field.grid.total):
        yield (*coords_of(field.grid, idx), float(flat[idx]))


def write_pgm(path, field):
    """
    Write a d=2 field as a binary 16-bit P5 PGM, min-max normalized. The
    normalization bounds go to a sidecar text file, path + ".txt".

    Args:
        path (str):
        field (ScalarField): must have d = 2

    Returns:
        Tuple[float, float]: the (min, max) bounds used
    """
    if field.grid.dim != 2:
        raise FormatError(f"PGM export needs a d=2 field, got d={field.grid.dim}")

    values = field.values
    low, high = float(values.min()), float(values.max())
    span = high - low
    if span > 0:
        scaled = np.rint((values - low) / span * PGM_MAXVAL)
    else:
        scaled = np.zeros_like(values)
    pixels = scaled.astype(">u2")

    rows, cols = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n{PGM_MAXVAL}\n".encode("ascii"))
        f.write(pixels.tobytes())
    with open(path + ".txt", "w", encoding="utf-8") as f:
        f.write(f"min={low!r}\nmax={high!r}\n")

    LOGGER.info("rendered %s (%dx%d, range [%g, %g])", os.path.basename(path), cols, rows, low, high)
    return low, high


def read_pgm(path):
    """
    Read a binary P5 PGM written by write_pgm.

    Returns:
        Tuple[np.ndarray, int]: pixel array and maxval
    """
    with open(path, "rb") as f:
        data = f.read()

    tokens = []
    offset = 0
    while len(tokens) < 4:
        while data[offset:offset + 1].isspace():
            offset += 1
        start = offset
        while offset < len(data) and not data[offset:offset + 1].isspace():
            offset += 1
        tokens.append(data[start:offset])
    offset += 1

    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a P5 PGM")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    dtype = ">u2" if maxval > 255 else "u1"
    pixels = np.frombuffer(data[offset:], dtype=dtype)
    if pixels.size != rows * cols:
        raise FormatError(f"{path}: expected {rows * cols} pixels, found {pixels.size}")
    return pixels.reshape(rows, cols), maxval
