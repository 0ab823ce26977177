import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_array_equal

from fpmpc.errors import FormatError, InvalidArgument
from fpmpc.glm import Dataset
from fpmpc.ingest import (
    RawRecord, format_libsvm, load_dataset, normalize_covariates, parse_csv_counts, parse_idx, parse_libsvm,
    records_to_dataset, train_test_split, write_idx,
)


# --------------------------------------------------------------------------
# IDX

def test_idx_image():
    raw = struct.pack(">IIII", 0x803, 1, 2, 2) + bytes([0, 255, 0, 255])
    assert_array_equal(parse_idx(raw), [[[0.0, 1.0], [0.0, 1.0]]])


def test_idx_labels():
    assert_array_equal(parse_idx(struct.pack(">II", 0x801, 3) + bytes([0, 1, 9])), [0, 1, 9])


@pytest.mark.parametrize("raw", [
    struct.pack(">IIII", 0x803, 1, 2, 2) + bytes([0, 255, 0]),
    struct.pack(">II", 0x801, 3) + bytes([0, 1, 9, 4]),
    struct.pack(">II", 0x802, 0),
    b"\x00\x00",
    struct.pack(">II", 0x803, 1),
])
def test_idx_errors(raw):
    with pytest.raises(FormatError):
        parse_idx(raw)


def test_idx_write_round_trip():
    img = np.arange(24, dtype=np.uint8).reshape(2, 3, 4) * 10
    assert_array_equal(parse_idx(write_idx(img, True)), img / 255.0)
    assert_array_equal(parse_idx(write_idx(np.array([3, 1]), False)), [3, 1])


# --------------------------------------------------------------------------
# libsvm

def test_libsvm_examples():
    (r,) = parse_libsvm("1 1:0.5 3:-2")
    assert r.label == 1
    assert_array_equal(r.features, [0.5, 0, -2])
    recs = parse_libsvm("2\n1 2:1\n")
    assert recs[0].label == 2
    assert_array_equal(recs[0].features, [0, 0])


@pytest.mark.parametrize("text,line", [("1 3:1 2:1", 1), ("1 1:1\n0 2:x", 2), ("1 0:1", 1), ("a 1:1", 1),
                                       ("1 1:1\n1 2", 2)])
def test_libsvm_errors(text, line):
    with pytest.raises(FormatError, match=f"line {line}"):
        parse_libsvm(text)


def test_libsvm_width():
    (r,) = parse_libsvm("1 2:1", width=4)
    assert_array_equal(r.features, [0, 1, 0, 0])
    with pytest.raises(FormatError):
        parse_libsvm("1 5:1", width=4)


record_st = st.builds(
    lambda lab, xs: RawRecord(float(lab), np.array(xs)),
    st.integers(-3, 9),
    st.lists(st.one_of(st.just(0.0), st.floats(-1e6, 1e6, allow_nan=False)), min_size=5, max_size=5),
)


@given(st.lists(record_st, min_size=1, max_size=8))
def test_libsvm_round_trip(records):
    back = parse_libsvm(format_libsvm(records), width=5)
    assert len(back) == len(records)
    for a, b in zip(records, back):
        assert a.label == b.label
        assert_array_equal(a.features, b.features)


def test_records_to_dataset():
    d = records_to_dataset(parse_libsvm("1 1:2\n0 2:3\n"))
    assert_array_equal(d.A, [[2, 0], [0, 3]])
    assert_array_equal(d.t, [1, 0])
    with pytest.raises(FormatError):
        records_to_dataset([])


# --------------------------------------------------------------------------
# normalization

def test_normalize_examples():
    d = Dataset(np.array([[1.0, 5.0, 1.0], [2.0, 5.0, 0.0], [3.0, 5.0, 0.0]]), np.zeros(3))
    out = normalize_covariates(d, [True, True, False])
    assert_array_equal(out.A[:, 0], [-1, 0, 1])
    assert_array_equal(out.A[:, 1], [0, 0, 0])
    assert_array_equal(out.A[:, 2], d.A[:, 2])
    with pytest.raises(InvalidArgument):
        normalize_covariates(d, [True])


def test_normalize_scales_after_centering():
    # centering first gives scale 2 here; scaling first would give different values
    d = Dataset(np.array([[0.0], [1.0], [5.0]]), np.zeros(3))
    out = normalize_covariates(d, [True])
    centered = np.array([-2.0, -1.0, 3.0])
    assert_array_equal(out.A[:, 0], centered / 3.0)


# --------------------------------------------------------------------------
# count tables

CSV = "corps,year,count\n1,1875,0\n2,1877,3\n10,1876,1\n"


def test_csv_covariate_sets():
    d = parse_csv_counts("corps,year,count\n1,1875,0\n")
    assert_array_equal(d.A, [[1, 1, 0, 0]])
    full = parse_csv_counts(CSV)
    assert_array_equal(full.t, [0, 3, 1])
    assert_array_equal(full.A, [[1, 0, 0, 1, 0, 0], [0, 1, 0, 1, 2, 4], [0, 0, 1, 1, 1, 1]])
    assert_array_equal(parse_csv_counts(CSV, 2).A, [[1, 0, 0], [1, 2, 4], [1, 1, 1]])
    assert_array_equal(parse_csv_counts(CSV, 1).A, np.eye(3))
    assert parse_csv_counts(CSV, 0).A.shape == (3, 0)


def test_csv_one_hot_has_single_one():
    A = parse_csv_counts(CSV, 1).A
    assert_array_equal(A.sum(axis=1), 1.0)


@pytest.mark.parametrize("text", ["corps,year,count\n1,1875,-1\n", "corps,year,count\n1,1875,1.5\n",
                                  "corps,year,count\n1,x,1\n", "corps,year\n", "", "corps,year,count\n1,1875\n"])
def test_csv_errors(text):
    with pytest.raises(FormatError):
        parse_csv_counts(text)


def test_csv_bad_set():
    with pytest.raises(InvalidArgument):
        parse_csv_counts(CSV, 4)


# --------------------------------------------------------------------------
# split and loading

def test_train_test_split():
    d = Dataset(np.arange(20.0).reshape(10, 2), np.arange(10.0))
    tr, te = train_test_split(d, 7, seed=3)
    assert (tr.m, te.m) == (7, 3)
    assert sorted(np.concatenate([tr.t, te.t]).tolist()) == list(range(10))
    assert_array_equal(tr.A[:, 0], 2 * tr.t)
    tr2, _ = train_test_split(d, 7, seed=3)
    assert_array_equal(tr.t, tr2.t)
    with pytest.raises(InvalidArgument):
        train_test_split(d, 11)


def test_load_dataset(tmp_path):
    (tmp_path / "x.idx").write_bytes(write_idx(np.full((2, 2, 2), 255), True))
    (tmp_path / "y.idx").write_bytes(write_idx(np.array([1, 0]), False))
    d = load_dataset(tmp_path / "x.idx", "idx", tmp_path / "y.idx")
    assert d.A.shape == (2, 4) and np.all(d.A == 1.0)
    with pytest.raises(InvalidArgument):
        load_dataset(tmp_path / "x.idx", "idx")
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "y.idx", "idx", tmp_path / "x.idx")
    (tmp_path / "c.csv").write_text(CSV)
    assert load_dataset(tmp_path / "c.csv", "csv", covariates=2).A.shape == (3, 3)
    (tmp_path / "s.txt").write_text("1 2:1\n")
    assert load_dataset(tmp_path / "s.txt", "libsvm").A.shape == (1, 2)
    with pytest.raises(InvalidArgument):
        load_dataset(tmp_path / "s.txt", "parquet")
