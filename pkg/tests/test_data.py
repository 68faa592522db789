import numpy as np
import pytest

from smaxscore.data import DataFormatError, Dataset, Observation, read_csv, write_csv


def test_from_observations_roundtrip():
    obs = [Observation(1.0, 0.5, (0.1, -0.2)), Observation(-1.0, -0.3, (0.0, 2.0))]
    ds = Dataset.from_observations(obs)
    assert ds.n == 2
    assert ds.p == 2
    assert ds.zbound == pytest.approx(2.0)


def test_label_validation():
    with pytest.raises(DataFormatError, match="row 1"):
        Dataset(y=np.array([1.0, 0.0]), x=np.zeros(2), z=np.zeros((2, 1)))


def test_nonfinite_rejected():
    with pytest.raises(DataFormatError):
        Dataset(y=np.array([1.0]), x=np.array([np.nan]), z=np.zeros((1, 1)))


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(
        y=np.where(rng.standard_normal(20) > 0, 1.0, -1.0),
        x=rng.standard_normal(20),
        z=rng.standard_normal((20, 3)),
    )
    path = tmp_path / "data.csv"
    write_csv(ds, path)
    back = read_csv(path)
    assert np.array_equal(back.y, ds.y)
    assert np.array_equal(back.x, ds.x)
    assert np.array_equal(back.z, ds.z)


def test_csv_bad_label_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,x,z1\n1,0.1,0.2\n0,0.3,0.4\n")
    with pytest.raises(DataFormatError, match="line 3"):
        read_csv(path)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DataFormatError, match="header"):
        read_csv(path)


def test_csv_ragged_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,x,z1\n1,0.1\n")
    with pytest.raises(DataFormatError, match="line 2"):
        read_csv(path)


def test_subset_shares_memory():
    ds = Dataset(y=np.ones(6), x=np.arange(6.0), z=np.arange(12.0).reshape(6, 2))
    sub = ds.subset(2, 5)
    assert sub.n == 3
    assert np.shares_memory(sub.x, ds.x)
