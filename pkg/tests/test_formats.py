import csv
import struct

import numpy as np
import pytest

from sandpile_odometer import formats
from sandpile_odometer.errors import FormatError
from sandpile_odometer.grid import ScalarField, TorusGrid


@pytest.fixture
def field_2d():
    grid = TorusGrid(2, 6)
    values = np.random.default_rng(11).normal(size=grid.shape)
    return ScalarField(grid, values)


def test_dsgf_round_trip_is_exact(tmp_path, field_2d):
    path = str(tmp_path / "field.dsgf")

    formats.write_dsgf(path, field_2d)
    loaded = formats.read_dsgf(path)

    assert loaded.grid == field_2d.grid
    assert np.array_equal(loaded.values, field_2d.values)


def test_dsgf_header_layout(tmp_path, field_2d):
    path = str(tmp_path / "field.dsgf")

    formats.write_dsgf(path, field_2d)
    with open(path, "rb") as f:
        data = f.read()

    assert data[:4] == b"DSGF"
    assert struct.unpack("<IIQ", data[4:20]) == (1, 2, 6)
    assert len(data) == 20 + 8 * 36


@pytest.mark.parametrize(
    "mutate,message",
    [
        (lambda data: b"XXXX" + data[4:], "bad magic"),
        (lambda data: data[:4] + struct.pack("<I", 2) + data[8:], "unsupported DSGF version"),
        (lambda data: data[:-8], "expected"),
        (lambda data: data[:10], "truncated"),
    ],
    ids=["magic", "version", "short payload", "short header"],
)
def test_dsgf_rejects_malformed_files(tmp_path, field_2d, mutate, message):
    path = str(tmp_path / "field.dsgf")
    formats.write_dsgf(path, field_2d)
    with open(path, "rb") as f:
        data = f.read()
    with open(path, "wb") as f:
        f.write(mutate(data))

    with pytest.raises(FormatError, match=message):
        formats.read_dsgf(path)


def test_csv_writer_format(tmp_path):
    path = str(tmp_path / "table.csv")

    formats.write_csv(path, ["n", "value", "frequency"], [[8, 0.1, (1, -2)], [16, 2.5, ""]])

    with open(path, "rb") as f:
        raw = f.read()
    assert raw.count(b"\r\n") == 3
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    assert rows == [["n", "value", "frequency"], ["8", "0.1", "1 -2"], ["16", "2.5", ""]]


def test_field_rows_follow_lexicographic_order():
    grid = TorusGrid(2, 2)
    field = ScalarField(grid, [1.0, 2.0, 3.0, 4.0])

    assert list(formats.field_rows(field)) == [
        (-1, -1, 1.0),
        (-1, 0, 2.0),
        (0, -1, 3.0),
        (0, 0, 4.0),
    ]


def test_pgm_is_min_max_normalized(tmp_path, field_2d):
    path = str(tmp_path / "field.pgm")

    low, high = formats.write_pgm(path, field_2d)
    pixels, maxval = formats.read_pgm(path)

    assert maxval == 65535
    assert pixels.shape == (6, 6)
    assert pixels.min() == 0 and pixels.max() == 65535
    assert (low, high) == (field_2d.values.min(), field_2d.values.max())
    expected = np.rint((field_2d.values - low) / (high - low) * 65535)
    assert np.array_equal(pixels, expected.astype(np.uint16))


def test_pgm_sidecar_records_bounds(tmp_path, field_2d):
    path = str(tmp_path / "field.pgm")

    low, high = formats.write_pgm(path, field_2d)

    with open(path + ".txt", encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines == [f"min={low!r}", f"max={high!r}"]


def test_pgm_of_constant_field_is_black(tmp_path):
    path = str(tmp_path / "flat.pgm")

    formats.write_pgm(path, ScalarField(TorusGrid(2, 4), np.ones((4, 4))))
    pixels, _ = formats.read_pgm(path)

    assert not pixels.any()


def test_pgm_needs_two_dimensions(tmp_path):
    with pytest.raises(FormatError):
        formats.write_pgm(str(tmp_path / "line.pgm"), ScalarField(TorusGrid(1, 4), np.ones(4)))


def test_read_pgm_rejects_other_formats(tmp_path):
    path = tmp_path / "image.pgm"
    path.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")

    with pytest.raises(FormatError):
        formats.read_pgm(str(path))
