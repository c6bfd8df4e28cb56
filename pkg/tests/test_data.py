import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from logicforge.data import (
    Dataset,
    load_csv,
    quantize_features,
    quantize_inputs,
    split_dataset,
    synthetic_blobs,
    write_csv,
)


def test_quantize_inputs_examples():
    ranges = np.array([[-1.0, 3.0]])
    x = np.array([[-1.0], [3.0], [1.0]])
    assert quantize_features(x, ranges, 2)[:2].ravel().tolist() == [0, 3]
    # midpoint with one bit rounds half away from zero, to the top code
    assert quantize_features(x[2:], ranges, 1).ravel().tolist() == [1]


def test_out_of_range_values_clip():
    ranges = np.array([[0.0, 1.0]])
    assert quantize_features(np.array([[-5.0], [7.0]]), ranges, 3).ravel().tolist() == [0, 7]


def test_degenerate_feature_maps_to_zero():
    ranges = np.array([[2.0, 2.0], [0.0, 1.0]])
    assert quantize_features(np.array([[2.0, 1.0]]), ranges, 2).tolist() == [[0, 3]]


@given(st.integers(1, 8), st.lists(st.floats(-100, 100), min_size=2, max_size=30))
def test_codes_monotone_and_in_range(bits, values):
    col = np.array(sorted(values))[:, None]
    ranges = np.array([[col.min(), col.max()]])
    codes = quantize_features(col, ranges, bits).ravel()
    assert codes.min() >= 0 and codes.max() < 1 << bits
    assert np.all(np.diff(codes) >= 0)


def test_quantize_inputs_needs_ranges():
    with pytest.raises(ValueError):
        quantize_inputs(Dataset(np.zeros((2, 2)), np.zeros(2, dtype=int)), 2)


def test_split_is_seeded_partition():
    ds = synthetic_blobs(101, 3, 2, seed=0)
    a, b = split_dataset(ds, 4), split_dataset(ds, 4)
    assert np.array_equal(a.train.features, b.train.features)
    assert len(a.train) + len(a.val) + len(a.test) == 101
    assert len(a.train) == 61 and len(a.val) == 20
    # ranges come from the training split only
    np.testing.assert_array_equal(a.test.feature_ranges[:, 0], a.train.features.min(axis=0))


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.array([0]))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.array([0, -1]))


def test_csv_round_trip_without_split(tmp_path):
    ds = synthetic_blobs(50, 4, 3, seed=2)
    write_csv(ds, tmp_path / "d.csv")
    splits = load_csv(tmp_path / "d.csv", seed=1)
    ref = split_dataset(ds, 1)
    np.testing.assert_array_equal(splits.train.features, ref.train.features)
    np.testing.assert_array_equal(splits.test.labels, ref.test.labels)


def test_csv_with_split_column(tmp_path):
    ds = synthetic_blobs(6, 2, 2, seed=0)
    tags = ["train", "train", "val", "test", "train", "TEST"]
    write_csv(ds, tmp_path / "d.csv", tags)
    splits = load_csv(tmp_path / "d.csv")
    assert (len(splits.train), len(splits.val), len(splits.test)) == (3, 1, 2)
    np.testing.assert_array_equal(splits.val.features, ds.features[[2]])


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,label\n1.0,x\n")
    with pytest.raises(ValueError, match="malformed"):
        load_csv(p)
    p.write_text("a,label\n1.0,4\n")
    with pytest.raises(ValueError, match="out of range"):
        load_csv(p, num_classes=3)
    p.write_text("a,label,split\n1.0,0,holdout\n")
    with pytest.raises(ValueError, match="split"):
        load_csv(p)
