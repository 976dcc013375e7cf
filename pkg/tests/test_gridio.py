import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from nlrte import gridio
from nlrte.gridio import (
    GridFileDimensionError,
    GridFileFormatError,
    GridFileTruncatedError,
    read_array,
    read_csv,
    write_array,
    write_csv,
)


def test_two_by_two_zeros_is_fifty_bytes(tmp_path):
    path = tmp_path / "z.grid"
    write_array(np.zeros((2, 2)), path)
    # magic(6) + rank(4) + dims(8) + payload(32)
    assert path.stat().st_size == 50


def test_round_trip_exact(tmp_path):
    values = np.array([[0.1, -3.7e300], [5e-324, 1.0 + 2 ** -52]])
    path = tmp_path / "f.grid"
    write_array(values, path)
    back = read_array(path)
    assert back.shape == values.shape
    assert np.array_equal(back, values)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64,
              array_shapes(min_dims=1, max_dims=4, min_side=1, max_side=5),
              elements=st.floats(allow_nan=False, allow_infinity=False,
                                 width=64)))
def test_round_trip_property(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("grids") / "p.grid"
    write_array(values, path)
    assert np.array_equal(read_array(path), values)


def test_nan_write_refused(tmp_path):
    bad = np.array([1.0, np.nan])
    with pytest.raises(ValueError, match="non-finite"):
        write_array(bad, tmp_path / "bad.grid")
    assert not (tmp_path / "bad.grid").exists()


def test_inf_write_refused(tmp_path):
    with pytest.raises(ValueError, match="non-finite"):
        write_array(np.array([np.inf]), tmp_path / "bad.grid")


def test_bad_magic(tmp_path):
    path = tmp_path / "bogus.grid"
    path.write_bytes(b"BOGUS1" + b"\x00" * 44)
    with pytest.raises(GridFileFormatError):
        read_array(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.grid"
    write_array(np.ones((3, 3)), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-9])
    with pytest.raises(GridFileTruncatedError):
        read_array(path)


def test_truncated_header(tmp_path):
    path = tmp_path / "h.grid"
    path.write_bytes(b"NLRTE1\x02")
    with pytest.raises(GridFileTruncatedError):
        read_array(path)


def test_dimension_overflow(tmp_path):
    import struct
    path = tmp_path / "d.grid"
    path.write_bytes(b"NLRTE1" + struct.pack("<I", 3)
                     + struct.pack("<3I", 2 ** 32 - 1, 2 ** 32 - 1, 4))
    with pytest.raises(GridFileDimensionError):
        read_array(path)


def test_zero_rank_rejected(tmp_path):
    import struct
    path = tmp_path / "r0.grid"
    path.write_bytes(b"NLRTE1" + struct.pack("<I", 0))
    with pytest.raises(GridFileDimensionError):
        read_array(path)


def test_field_container_dispatch(tmp_path):
    from nlrte.fields import PhaseSpaceField
    from nlrte.grids import SpatialGrid

    grid = SpatialGrid.unit(1, 4)
    field = PhaseSpaceField(grid, np.arange(8.0).reshape(4, 2))
    path = tmp_path / "field.grid"
    gridio.write_grid_file(field, path)
    assert np.array_equal(gridio.read_grid_file(path), field.values)


def test_csv_round_trip(tmp_path):
    path = tmp_path / "curve.csv"
    z = np.linspace(0, 1, 7)
    v = np.sin(z) * 1e-5
    write_csv(path, ["z", "value"], [z, v])
    header, cols = read_csv(path)
    assert header == ["z", "value"]
    assert np.array_equal(cols[0], z)
    assert np.array_equal(cols[1], v)
