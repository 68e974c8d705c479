"""Index file round trips, slot arithmetic, and I/O accounting."""

from __future__ import annotations

import numpy as np
import pytest

from diskvec.errors import FormatError
from diskvec.graphbuild import GraphIndex
from diskvec.layout import ReadInterval, build_insertion_layout
from diskvec.diskstore import (
    IndexReader,
    page_capacity_for,
    slot_size,
    write_index,
)
from diskvec.vecdata import VectorDataset


def test_slot_and_capacity_arithmetic():
    # dim=128, R=32: slot = 8 + 512 + 2 + 256 = 778; five fit in a 4 KiB page
    assert slot_size(128, 32) == 778
    assert page_capacity_for(4096, 128, 32) == 5


def test_single_node_index(tmp_path):
    ds = VectorDataset(np.array([[1.5, -2.5]], dtype=np.float32))
    graph = GraphIndex(adjacency=[np.empty(0, dtype=np.int64)], entry_id=0, R=4)
    lm = build_insertion_layout(ds, page_capacity_for(4096, 2, 4))
    path = tmp_path / "one.bin"
    header = write_index(ds, graph, lm, path, page_size=4096)
    assert header.total_pages == 1
    with IndexReader(path) as r:
        page = r.read_page(0)
        assert page.node_count == 1
        vec, adj = page.slot(0, expect_node=0)
        assert np.array_equal(vec, ds.vectors[0])
        assert adj.size == 0


def test_round_trip_every_node(tmp_path, smoke):
    for kind in ("sim", "ins"):
        lm = smoke.layout_for(kind)
        with smoke.reader(kind) as r:
            for node in range(smoke.dataset.n):
                vec, adj = r.read_node(node, lm)
                assert vec.tobytes() == smoke.dataset.vectors[node].tobytes()  # bit-exact
                assert np.array_equal(adj, smoke.graph.adjacency[node])


def test_page_coverage_partitions_nodes(tmp_path, smoke):
    with smoke.reader("sim") as r:
        seen: list[int] = []
        for pid in range(r.header.total_pages):
            seen.extend(r.read_page(pid).node_ids.tolist())
    assert sorted(seen) == list(range(smoke.dataset.n))


def test_same_slots_under_both_layouts(smoke):
    def slot_multiset(kind):
        out = []
        with smoke.reader(kind) as r:
            for pid in range(r.header.total_pages):
                page = r.read_page(pid)
                for s in range(page.node_count):
                    vec, adj = page.slot(s)
                    out.append((int(page.node_ids[s]), vec.tobytes(), adj.tobytes()))
        return sorted(out)

    assert slot_multiset("sim") == slot_multiset("ins")


def test_read_accounting(smoke):
    with smoke.reader("sim") as r:
        r.read_page(0)
        r.read_page(0)
        assert r.stats.snapshot()[:2] == (2, 2)
        r.stats.reset()
        pages = r.read_page_range(ReadInterval(0, 4))
        assert [p.page_id for p in pages] == [0, 1, 2, 3]
        assert r.stats.snapshot()[:2] == (1, 4)
        r.stats.reset()
        a = r.read_page_range(ReadInterval(0, 2))
        b = r.read_page_range(ReadInterval(2, 2))
        assert r.stats.snapshot()[:2] == (2, 4)
        whole = r.read_page_range(ReadInterval(0, 4))
        got = [p.node_ids.tolist() for p in a + b]
        want = [p.node_ids.tolist() for p in whole]
        assert got == want


def test_range_of_one_equals_single_read(smoke):
    with smoke.reader("sim") as r:
        single = r.read_page(3)
        ops0, pages0, _ = r.stats.snapshot()
        ranged = r.read_page_range(ReadInterval(3, 1))
        ops1, pages1, _ = r.stats.snapshot()
        assert (ops1 - ops0, pages1 - pages0) == (1, 1)
        assert ranged[0].node_ids.tolist() == single.node_ids.tolist()


def test_reads_identical_bytes(smoke):
    with smoke.reader("sim") as r:
        p1 = r.read_page(5)
        p2 = r.read_page(5)
        assert p1.vectors.tobytes() == p2.vectors.tobytes()
        assert np.array_equal(p1.node_ids, p2.node_ids)


def test_out_of_range_reads(smoke):
    with smoke.reader("sim") as r:
        with pytest.raises(ValueError):
            r.read_page(r.header.total_pages)
        with pytest.raises(ValueError):
            r.read_page_range(ReadInterval(r.header.total_pages - 1, 2))


def test_slot_overflow_names_required_page_size(tmp_path):
    ds = VectorDataset(np.zeros((10, 128), dtype=np.float32))
    graph = GraphIndex(
        adjacency=[np.empty(0, dtype=np.int64) for _ in range(10)], entry_id=0, R=32
    )
    lm = build_insertion_layout(ds, page_capacity=5)
    needed = 2 + 5 * slot_size(128, 32)
    with pytest.raises(ValueError, match=str(needed)):
        write_index(ds, graph, lm, tmp_path / "x.bin", page_size=1024)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTANINDEX" + b"\x00" * 100)
    with pytest.raises(FormatError):
        IndexReader(path)


def test_slot_node_id_mismatch_is_corruption(smoke):
    with smoke.reader("sim") as r:
        page = r.read_page(0)
        wrong = int(page.node_ids[0]) + 1
        with pytest.raises(FormatError):
            page.slot(0, expect_node=wrong)
