"""Hybrid cache: a frozen static node cache preloaded by BFS from the entry
point, plus a dynamic page cache fed by batch reads during the refinement
phase, with FIFO / Random / LFU replacement.

The budget is expressed in node records; the dynamic share is converted to
whole pages. Lookups and admissions are linearizable under an internal lock so
concurrent query workers can share one cache.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field

import numpy as np

from .diskstore import DiskPage, IndexReader
from .graphbuild import GraphIndex
from .layout import LayoutMap

POLICIES = ("LFU", "FIFO", "RANDOM")


@dataclass
class CacheConfig:
    """Budget split between the static node cache and the dynamic page cache."""

    total_budget_nodes: int
    static_fraction: float = 0.2
    policy: str = "LFU"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total_budget_nodes < 0:
            raise ValueError("total_budget_nodes must be >= 0")
        if not 0.0 <= self.static_fraction <= 1.0:
            raise ValueError("static_fraction must be in [0, 1]")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {self.policy!r}")

    @property
    def static_capacity_nodes(self) -> int:
        return round(self.static_fraction * self.total_budget_nodes)

    def dynamic_capacity_pages(self, page_capacity: int) -> int:
        return (self.total_budget_nodes - self.static_capacity_nodes) // page_capacity


@dataclass
class PhaseCounts:
    static_hits: int = 0
    dynamic_hits: int = 0
    misses: int = 0

    @property
    def lookups(self) -> int:
        return self.static_hits + self.dynamic_hits + self.misses

    @property
    def hit_rate(self) -> float:
        total = self.lookups
        return (self.static_hits + self.dynamic_hits) / total if total else 0.0


@dataclass
class HitStats:
    """Per-phase hit/miss counters."""

    phase1: PhaseCounts = field(default_factory=PhaseCounts)
    phase2: PhaseCounts = field(default_factory=PhaseCounts)

    def for_phase(self, phase: int) -> PhaseCounts:
        if phase == 1:
            return self.phase1
        if phase == 2:
            return self.phase2
        raise ValueError(f"phase must be 1 or 2, got {phase}")

    def record(self, phase: int, kind: str | None) -> None:
        counts = self.for_phase(phase)
        if kind == "static":
            counts.static_hits += 1
        elif kind == "dynamic":
            counts.dynamic_hits += 1
        elif kind is None:
            counts.misses += 1
        else:
            raise ValueError(f"unknown hit kind {kind!r}")

    def merged(self) -> PhaseCounts:
        return PhaseCounts(
            static_hits=self.phase1.static_hits + self.phase2.static_hits,
            dynamic_hits=self.phase1.dynamic_hits + self.phase2.dynamic_hits,
            misses=self.phase1.misses + self.phase2.misses,
        )


def preload_static(
    graph: GraphIndex,
    reader: IndexReader,
    layout: LayoutMap,
    capacity_nodes: int,
) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """BFS from the entry point, admitting whole hops while they fit and
    truncating the final hop by ascending node id.

    Entries carry the on-disk (vector, adjacency) bytes so cached answers are
    identical to direct reads.
    """
    entries: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    if capacity_nodes <= 0:
        return entries
    visited = {graph.entry_id}
    hop = [graph.entry_id]
    while hop and len(entries) < capacity_nodes:
        room = capacity_nodes - len(entries)
        admit = hop if len(hop) <= room else hop[:room]
        for node in admit:
            vec, adj = reader.read_node(node, layout)
            entries[node] = (vec.copy(), adj.copy())
        if len(hop) > room:
            break
        nxt: set[int] = set()
        for node in hop:
            for j in graph.adjacency[node].tolist():
                if j not in visited:
                    visited.add(j)
                    nxt.add(j)
        hop = sorted(nxt)
    return entries


class DynamicCache:
    """Page store with pluggable replacement.

    LFU counts start at zero on first admission, rise by one per dynamic hit
    or re-admission, and ties evict the earliest-inserted page. FIFO ignores
    re-admission. RANDOM draws from a seeded generator.
    """

    def __init__(self, capacity_pages: int, policy: str = "LFU", seed: int = 0):
        if policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
        if capacity_pages < 0:
            raise ValueError("capacity_pages must be >= 0")
        self.capacity_pages = capacity_pages
        self.policy = policy
        self.pages: dict[int, DiskPage] = {}
        self.freq: dict[int, int] = {}
        self.ins_seq: dict[int, int] = {}
        self._seq = 0
        self._rng = random.Random(seed)

    def __contains__(self, page_id: int) -> bool:
        return page_id in self.pages

    def __len__(self) -> int:
        return len(self.pages)

    def get(self, page_id: int) -> DiskPage | None:
        return self.pages.get(page_id)

    def touch(self, page_id: int) -> None:
        self.freq[page_id] += 1

    def evict_candidate(self) -> int:
        """Pick the victim page under the configured policy; cache must be
        nonempty."""
        if not self.pages:
            raise RuntimeError("cannot pick an eviction candidate from an empty cache")
        if self.policy == "FIFO":
            return min(self.pages, key=lambda p: self.ins_seq[p])
        if self.policy == "LFU":
            return min(self.pages, key=lambda p: (self.freq[p], self.ins_seq[p]))
        ids = sorted(self.pages)
        return ids[self._rng.randrange(len(ids))]

    def admit(self, page: DiskPage) -> list[int]:
        """Insert one page, evicting per policy until within capacity; returns
        the evicted page ids in order."""
        pid = page.page_id
        if pid in self.pages:
            self.pages[pid] = page
            self.freq[pid] += 1  # re-admission refreshes LFU, not FIFO position
        else:
            self.pages[pid] = page
            self.freq[pid] = 0
            self.ins_seq[pid] = self._seq
            self._seq += 1
        evicted: list[int] = []
        while len(self.pages) > self.capacity_pages:
            victim = self.evict_candidate()
            del self.pages[victim]
            del self.freq[victim]
            del self.ins_seq[victim]
            evicted.append(victim)
        return evicted

    def reset(self) -> None:
        self.pages.clear()
        self.freq.clear()
        self.ins_seq.clear()
        self._seq = 0


class HybridCache:
    """Static node cache + dynamic page cache behind one lookup surface."""

    def __init__(
        self,
        static_entries: dict[int, tuple[np.ndarray, np.ndarray]],
        dynamic_capacity_pages: int,
        layout: LayoutMap,
        policy: str = "LFU",
        seed: int = 0,
    ):
        self.static = dict(static_entries)
        self.dynamic = DynamicCache(dynamic_capacity_pages, policy=policy, seed=seed)
        self.layout = layout
        self.stats = HitStats()
        self._lock = threading.Lock()

    @property
    def dynamic_capacity_pages(self) -> int:
        return self.dynamic.capacity_pages

    def lookup(
        self, node_id: int, phase: int
    ) -> tuple[str, np.ndarray, np.ndarray] | None:
        """Check static first, then the dynamic page store. Returns
        (kind, vector, adjacency) on a hit; None is a miss, not an error."""
        with self._lock:
            hit = self.static.get(node_id)
            if hit is not None:
                self.stats.record(phase, "static")
                return ("static", hit[0], hit[1])
            page = self.dynamic.get(self.layout.page_of(node_id))
            if page is not None:
                self.dynamic.touch(page.page_id)
                vec, adj = page.slot(self.layout.slot_of(node_id), expect_node=node_id)
                self.stats.record(phase, "dynamic")
                return ("dynamic", vec, adj)
            self.stats.record(phase, None)
            return None

    def admit_pages(self, pages: list[DiskPage]) -> list[int]:
        """Write batch-read pages into the dynamic store; returns evictions in
        order."""
        evicted: list[int] = []
        with self._lock:
            for page in pages:
                evicted.extend(self.dynamic.admit(page))
        return evicted

    def resident_pages(self) -> set[int]:
        with self._lock:
            return set(self.dynamic.pages)

    def reset_dynamic(self) -> None:
        with self._lock:
            self.dynamic.reset()
