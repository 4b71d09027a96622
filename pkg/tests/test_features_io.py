import numpy as np
import pytest

from oirdetect.features import (FeatureFormatError, FeatureMatrix, read_csv,
                                read_pfv1, write_csv, write_pfv1)


def _matrix():
    names = ("a", "b", "c")
    ids = ("s1", "s2")
    values = np.array([[1.0, np.nan, -3.5], [0.25, 2.0, np.nan]])
    present = ~np.isnan(values)
    return FeatureMatrix(names, ids, values, present)


def test_csv_roundtrip(tmp_path):
    m = _matrix()
    path = tmp_path / "f.csv"
    write_csv(m, path)
    m2 = read_csv(path)
    assert m2.names == m.names
    assert m2.ids == m.ids
    assert np.array_equal(m2.present, m.present)
    assert np.allclose(m2.values[m.present], m.values[m.present])


def test_csv_idempotent_bytes(tmp_path):
    m = _matrix()
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(m, p1)
    write_csv(read_csv(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_pfv1_roundtrip_bit_identical(tmp_path):
    m = _matrix()
    p1, p2 = tmp_path / "a.pfv1", tmp_path / "b.pfv1"
    write_pfv1(m, p1)
    m2 = read_pfv1(p1)
    assert m2.names == m.names
    assert np.array_equal(m2.present, m.present)
    write_pfv1(m2, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_pfv1_bad_magic(tmp_path):
    path = tmp_path / "x.pfv1"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(FeatureFormatError):
        read_pfv1(path)


def test_row_and_subset():
    m = _matrix()
    row = m.row("s2")
    assert row["a"] == 0.25
    sub = m.subset(["s2"])
    assert sub.ids == ("s2",)
    assert np.allclose(sub.values[0][sub.present[0]],
                       m.values[1][m.present[1]])
