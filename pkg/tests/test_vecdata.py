"""Dataset IO, exact distance, ground truth, and recall oracles."""

from __future__ import annotations

import math
import struct

import numpy as np
import pytest

from diskvec.errors import FormatError
from diskvec.vecdata import (
    VectorDataset,
    ground_truth_topk,
    l2_distance,
    load_fvecs,
    load_ivecs,
    recall_at_k,
    write_fvecs,
    write_ivecs,
)


def test_load_fvecs_single_record(tmp_path):
    path = tmp_path / "one.fvecs"
    path.write_bytes(struct.pack("<iff", 2, 1.0, 2.0))
    ds = load_fvecs(path)
    assert ds.n == 1
    assert ds.dim == 2
    assert np.array_equal(ds.vectors[0], np.array([1.0, 2.0], dtype=np.float32))


def test_load_fvecs_inconsistent_dimension(tmp_path):
    path = tmp_path / "bad.fvecs"
    path.write_bytes(struct.pack("<iff", 2, 1.0, 2.0) + struct.pack("<ifff", 3, 1.0, 2.0, 3.0))
    with pytest.raises(FormatError, match="declares 3, expected 2"):
        load_fvecs(path)


def test_load_fvecs_truncated_names_offset(tmp_path):
    path = tmp_path / "trunc.fvecs"
    good = struct.pack("<iff", 2, 1.0, 2.0)
    path.write_bytes(good + struct.pack("<if", 2, 1.0))  # second record cut short
    with pytest.raises(FormatError, match=f"byte offset {len(good)}"):
        load_fvecs(path)


def test_load_fvecs_empty_file(tmp_path):
    path = tmp_path / "empty.fvecs"
    path.write_bytes(b"")
    with pytest.raises(FormatError, match="empty"):
        load_fvecs(path)


def test_fvecs_round_trip_100_records(tmp_path):
    rng = np.random.default_rng(3)
    vecs = rng.normal(size=(100, 24)).astype(np.float32)
    path = tmp_path / "rt.fvecs"
    write_fvecs(path, vecs)
    ds = load_fvecs(path)
    assert ds.n == 100 and ds.dim == 24
    assert np.array_equal(ds.vectors, vecs)  # bit-exact


def test_ivecs_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    ids = rng.integers(0, 1000, size=(17, 5)).astype(np.int32)
    path = tmp_path / "rt.ivecs"
    write_ivecs(path, ids)
    assert np.array_equal(load_ivecs(path), ids)


def test_l2_identity():
    v = np.array([7.5, -1.0, 0.0])
    assert l2_distance(v, v) == 0.0


def test_l2_3_4_5():
    assert l2_distance(np.array([0.0, 0.0]), np.array([3.0, 4.0])) == pytest.approx(5.0)


def test_l2_matches_componentwise_oracle():
    rng = np.random.default_rng(11)
    a = rng.normal(size=16).astype(np.float32)
    b = rng.normal(size=16).astype(np.float32)
    # independent accumulation in plain python floats
    acc = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        acc += (x - y) ** 2
    assert l2_distance(a, b) == pytest.approx(math.sqrt(acc), abs=1e-6)


def test_l2_dimension_mismatch():
    with pytest.raises(ValueError):
        l2_distance(np.zeros(3), np.zeros(4))


def test_l2_symmetry_nonneg_triangle():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(30, 6))
    for _ in range(200):
        i, j, k = rng.integers(0, 30, size=3)
        dij = l2_distance(pts[i], pts[j])
        dji = l2_distance(pts[j], pts[i])
        assert dij == dji >= 0.0
        assert dij <= l2_distance(pts[i], pts[k]) + l2_distance(pts[k], pts[j]) + 1e-6


def test_ground_truth_hand_checked():
    ds = VectorDataset(np.array([[0.0], [1.0], [5.0]], dtype=np.float32))
    # distances from 0.9: 0.9, 0.1, 4.1
    assert ground_truth_topk(ds, np.array([0.9]), 2).tolist() == [1, 0]


def test_ground_truth_full_ranking():
    rng = np.random.default_rng(13)
    ds = VectorDataset(rng.normal(size=(20, 4)).astype(np.float32))
    q = rng.normal(size=4)
    ids = ground_truth_topk(ds, q, 20)
    dists = [l2_distance(ds.vectors[i], q) for i in ids]
    assert sorted(ids.tolist()) == list(range(20))
    assert all(dists[i] <= dists[i + 1] + 1e-12 for i in range(19))


def test_ground_truth_tie_breaks_by_lower_id():
    ds = VectorDataset(np.array([[1.0, 0.0], [-1.0, 0.0], [9.0, 9.0]], dtype=np.float32))
    assert ground_truth_topk(ds, np.array([0.0, 0.0]), 2).tolist() == [0, 1]


def test_ground_truth_k_too_large():
    ds = VectorDataset(np.zeros((3, 2), dtype=np.float32))
    with pytest.raises(ValueError):
        ground_truth_topk(ds, np.zeros(2), 4)


def test_recall_cases():
    truth = np.arange(10)
    assert recall_at_k(np.arange(10), truth) == 1.0
    assert recall_at_k(np.arange(10, 20), truth) == 0.0
    mixed = np.array([0, 1, 2, 3, 4, 50, 51, 52, 53, 54])
    assert recall_at_k(mixed, truth) == 0.5


def test_recall_of_ground_truth_is_one():
    rng = np.random.default_rng(14)
    ds = VectorDataset(rng.normal(size=(40, 3)).astype(np.float32))
    q = rng.normal(size=3)
    gt = ground_truth_topk(ds, q, 7)
    assert recall_at_k(gt, gt) == 1.0


def test_recall_length_mismatch():
    with pytest.raises(ValueError):
        recall_at_k(np.arange(3), np.arange(4))
