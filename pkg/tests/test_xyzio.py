"""Cloud text format: round trips, comments, malformed input."""

import numpy as np
import pytest

from cloudup.errors import XYZParseError
from cloudup.xyzio import read_xyz, write_xyz

from conftest import make_rng


def test_roundtrip_bit_exact(tmp_path):
    rng = make_rng(2)
    pts = np.concatenate([
        rng.normal(size=(50, 3)),
        rng.normal(size=(5, 3)) * 1e-300,   # subnormal territory
        rng.normal(size=(5, 3)) * 1e300,
    ])
    path = tmp_path / "cloud.xyz"
    write_xyz(path, pts)
    back, normals = read_xyz(path)
    assert normals is None
    assert np.array_equal(back, pts)


def test_roundtrip_with_normals(tmp_path):
    rng = make_rng(3)
    pts = rng.normal(size=(20, 3))
    nrm = rng.normal(size=(20, 3))
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    path = tmp_path / "cloud.xyz"
    write_xyz(path, pts, nrm)
    back_p, back_n = read_xyz(path)
    assert np.array_equal(back_p, pts)
    assert np.array_equal(back_n, nrm)


def test_comments_and_blank_lines(tmp_path):
    path = tmp_path / "c.xyz"
    path.write_text("# header\n\n1 2 3\n   \n# mid\n4 5 6\n")
    pts, _ = read_xyz(path)
    assert pts.tolist() == [[1, 2, 3], [4, 5, 6]]


def test_bad_column_count(tmp_path):
    path = tmp_path / "c.xyz"
    path.write_text("1 2 3\n1 2 3 4\n")
    with pytest.raises(XYZParseError) as err:
        read_xyz(path)
    assert err.value.line_number == 2


def test_inconsistent_width(tmp_path):
    path = tmp_path / "c.xyz"
    path.write_text("1 2 3\n1 2 3 0 0 1\n")
    with pytest.raises(XYZParseError) as err:
        read_xyz(path)
    assert err.value.line_number == 2
    assert "column count" in str(err.value)


def test_non_numeric_field(tmp_path):
    path = tmp_path / "c.xyz"
    path.write_text("1 2 3\n1 two 3\n")
    with pytest.raises(XYZParseError) as err:
        read_xyz(path)
    assert err.value.line_number == 2


def test_non_finite_value(tmp_path):
    path = tmp_path / "c.xyz"
    path.write_text("1 2 nan\n")
    with pytest.raises(XYZParseError):
        read_xyz(path)


def test_empty_file(tmp_path):
    path = tmp_path / "c.xyz"
    path.write_text("# nothing here\n")
    with pytest.raises(XYZParseError):
        read_xyz(path)
