"""Beam search over the disk index with two-phase transition detection,
similarity-aware batch loading on refinement-phase misses, and per-query
statistics.

The candidate queue is ordered by compressed (PQ) distance; exact distances
are computed only for expanded nodes and used only for the final ranking.
Caching can change I/O counts but never the returned ids.
"""

from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cache import HitStats, HybridCache
from .diskstore import IndexReader
from .errors import InvariantError
from .layout import LayoutMap, ReadInterval, compute_read_interval
from .pqcodec import PQCodebook, build_distance_table, pq_distance, pq_distance_batch
from .vecdata import VectorDataset, ground_truth_topk, recall_at_k


@dataclass
class SearchParams:
    """Per-query knobs; k results out of a queue of length l >= k."""

    k: int = 10
    l: int = 100
    beam_width: int = 4
    theta: float = 0.5
    window_pages: int = 2

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.l < self.k:
            raise ValueError(f"l={self.l} must be >= k={self.k}")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        if self.window_pages < 1:
            raise ValueError("window_pages must be >= 1")


@dataclass
class PhaseState:
    """Search phase: 1 = convergence toward the query, 2 = top-k refinement.
    Transitions at most once and never reverts."""

    phase: int = 1

    def to_refinement(self) -> None:
        if self.phase != 1:
            raise InvariantError("phase transition fired twice")
        self.phase = 2


@dataclass
class TraceRecord:
    iteration: int
    node_id: int
    exact_dist: float
    phase: int
    hit_kind: str  # static | dynamic | miss


@dataclass
class SearchStats:
    iterations: int = 0
    transition_iter_theta: int = 0
    transition_iter_panns: int = 0
    transition_iter_truth: int | None = None
    distance_trace: list[float] = field(default_factory=list)
    trace: list[TraceRecord] = field(default_factory=list)
    d_min: float | None = None
    d_max: float | None = None
    io_ops: int = 0
    pages_read: int = 0
    bytes_read: int = 0
    hits: HitStats = field(default_factory=HitStats)
    latency_s: float = 0.0


def detect_transition(
    queue_ids: list[int], visited: set[int] | dict, k: int, theta: float
) -> bool:
    """True iff the first ceil(theta * k) queue candidates are all visited.

    theta = 1 is the baseline rule (all top-k visited); a queue shorter than
    the prefix is insufficient evidence and returns False.
    """
    need = math.ceil(theta * k)
    if len(queue_ids) < need:
        return False
    return all(nid in visited for nid in queue_ids[:need])


def _trim_interval(
    interval: ReadInterval, already: set[int], target_page: int
) -> ReadInterval:
    """Drop edge pages fetched earlier in this beam iteration, keeping the
    range contiguous and covering the target page."""
    start, end = interval.start_page, interval.end_page
    while start < target_page and start in already:
        start += 1
    while end > target_page and end in already:
        end -= 1
    return ReadInterval(start_page=start, page_count=end - start + 1)


def beam_search(
    query: np.ndarray,
    params: SearchParams,
    reader: IndexReader,
    layout: LayoutMap,
    cache: HybridCache,
    codebook: PQCodebook,
    codes: np.ndarray,
    true_nn: int | None = None,
) -> tuple[list[tuple[int, float]], SearchStats]:
    """Search the disk index; returns (top-k (id, exact distance), stats).

    The loop seeds the queue with the entry node, expands up to beam_width
    unvisited candidates per iteration in PQ-distance order, fetches their
    pages through the cache (single page while converging; a sequential window
    admitted to the dynamic cache during refinement), and stops once the whole
    queue prefix has been expanded.
    """
    header = reader.header
    q64 = np.asarray(query, dtype=np.float64).ravel()
    if q64.shape[0] != header.dim:
        raise ValueError(f"query dimension {q64.shape[0]} != index dimension {header.dim}")
    table = build_distance_table(q64, codebook)
    page_size = header.page_size

    stats = SearchStats()
    phase = PhaseState()
    entry = header.entry_id
    queue: list[tuple[float, int]] = [(pq_distance(table, codes[entry]), entry)]
    seen = {entry}
    visited: dict[int, float] = {}
    t_theta: int | None = None
    t_panns: int | None = None
    started = time.perf_counter()

    while True:
        batch = [nid for _, nid in queue if nid not in visited][: params.beam_width]
        if not batch:
            break
        stats.iterations += 1
        if stats.iterations > header.n:
            raise InvariantError("beam search exceeded the iteration bound n")
        admitted_now: set[int] = set()
        first_in_batch = True
        for nid in batch:
            hit = cache.lookup(nid, phase.phase)
            if hit is not None:
                kind, vec, adj = hit
            else:
                kind = "miss"
                page_id = layout.page_of(nid)
                if phase.phase == 1 or cache.dynamic_capacity_pages == 0:
                    page = reader.read_page(page_id)
                    stats.io_ops += 1
                    stats.pages_read += 1
                    stats.bytes_read += page_size
                    vec, adj = page.slot(layout.slot_of(nid), expect_node=nid)
                else:
                    interval = _trim_interval(
                        compute_read_interval(nid, params.window_pages, layout),
                        admitted_now,
                        page_id,
                    )
                    pages = reader.read_page_range(interval)
                    stats.io_ops += 1
                    stats.pages_read += interval.page_count
                    stats.bytes_read += interval.page_count * page_size
                    cache.admit_pages(pages)
                    admitted_now.update(p.page_id for p in pages)
                    page = pages[page_id - interval.start_page]
                    vec, adj = page.slot(layout.slot_of(nid), expect_node=nid)
            stats.hits.record(phase.phase, None if kind == "miss" else kind)

            diff = q64 - vec
            exact = float(np.sqrt(diff @ diff))
            visited[nid] = exact
            stats.trace.append(TraceRecord(stats.iterations, nid, exact, phase.phase, kind))
            if first_in_batch:
                stats.distance_trace.append(exact)
                first_in_batch = False
            if true_nn is not None and nid == true_nn and stats.transition_iter_truth is None:
                stats.transition_iter_truth = stats.iterations
            if phase.phase == 2:
                stats.d_min = exact if stats.d_min is None else min(stats.d_min, exact)
                stats.d_max = exact if stats.d_max is None else max(stats.d_max, exact)

            fresh = [j for j in adj.tolist() if j not in seen]
            if fresh:
                dists = pq_distance_batch(table, codes[fresh])
                for dj, j in zip(dists.tolist(), fresh):
                    queue.append((dj, j))
                    seen.add(j)

        queue.sort()
        del queue[params.l :]
        ids = [nid for _, nid in queue]
        if t_panns is None and detect_transition(ids, visited, params.k, 1.0):
            t_panns = stats.iterations
        if phase.phase == 1 and detect_transition(ids, visited, params.k, params.theta):
            phase.to_refinement()
            t_theta = stats.iterations

    stats.latency_s = time.perf_counter() - started
    stats.transition_iter_theta = t_theta if t_theta is not None else stats.iterations
    stats.transition_iter_panns = t_panns if t_panns is not None else stats.iterations

    ranked = sorted(visited.items(), key=lambda kv: (kv[1], kv[0]))
    return [(nid, dist) for nid, dist in ranked[: params.k]], stats


def aggregate_transition_ratios(pairs: list[tuple[int, int]]) -> float:
    """Median of per-query true-vs-baseline round ratios, clamped into (0, 1);
    0.5 when no query transitioned earlier than the baseline rule."""
    if not pairs:
        return 0.5
    if not any(t < tp for t, tp in pairs):
        return 0.5
    ratios = [min(max(t / tp, 0.01), 0.99) for t, tp in pairs]
    return float(statistics.median(ratios))


@dataclass
class ThetaCalibration:
    theta: float
    sample_count: int
    usable_count: int  # samples whose true nearest neighbor was expanded
    early_count: int  # samples where the true round beat the baseline rule


def calibrate_theta(
    dataset: VectorDataset,
    reader: IndexReader,
    layout: LayoutMap,
    codebook: PQCodebook,
    codes: np.ndarray,
    k: int,
    l: int,
    sample_fraction: float = 0.01,
    seed: int = 0,
    beam_width: int = 4,
    window_pages: int = 2,
) -> ThetaCalibration:
    """Estimate theta from a seeded sample of dataset vectors used as queries.

    Per sample, t is the first iteration expanding the query's true nearest
    neighbor (brute-force oracle) and t' the first iteration the baseline
    all-top-k rule fires; theta aggregates t/t' per
    aggregate_transition_ratios. Runs uncached and single-threaded.
    """
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError("sample_fraction must be in (0, 1]")
    count = int(round(sample_fraction * dataset.n))
    if count < 1:
        raise ValueError(
            f"calibration sample is empty (fraction {sample_fraction} of n={dataset.n})"
        )
    rng = np.random.default_rng(seed)
    sample_ids = np.sort(rng.choice(dataset.n, size=count, replace=False))
    blank = HybridCache({}, 0, layout)
    params = SearchParams(k=k, l=l, beam_width=beam_width, theta=0.5, window_pages=window_pages)
    pairs: list[tuple[int, int]] = []
    for qid in sample_ids.tolist():
        q = dataset.vectors[qid]
        nn1 = int(ground_truth_topk(dataset, q, 1)[0])
        _, st = beam_search(q, params, reader, layout, blank, codebook, codes, true_nn=nn1)
        if st.transition_iter_truth is None:
            continue
        pairs.append((st.transition_iter_truth, st.transition_iter_panns))
    theta = aggregate_transition_ratios(pairs)
    return ThetaCalibration(
        theta=theta,
        sample_count=count,
        usable_count=len(pairs),
        early_count=sum(1 for t, tp in pairs if t < tp),
    )


@dataclass
class WorkloadReport:
    """Aggregates over every executed query (all repetitions)."""

    query_count: int
    repetitions: int
    workers: int
    wall_time_s: float
    qps: float
    latency_mean_ms: float
    latency_p50_ms: float
    latency_p95_ms: float
    latency_p99_ms: float
    mean_recall: float | None
    mean_io_ops: float
    mean_pages_read: float
    mean_bytes_read: float
    hit_rate_phase1: float
    hit_rate_phase2: float
    hits_total: HitStats
    mean_transition_theta: float
    mean_transition_panns: float
    mean_iterations: float
    results: list[list[int]]  # per query of the first repetition
    stats: list[SearchStats]  # first repetition, query order


def run_workload(
    queries: np.ndarray,
    params: SearchParams,
    reader: IndexReader,
    layout: LayoutMap,
    cache: HybridCache,
    codebook: PQCodebook,
    codes: np.ndarray,
    gt: np.ndarray | None = None,
    workers: int = 1,
    repetitions: int = 1,
    reset_between_reps: bool = True,
    reset_per_query: bool = False,
) -> WorkloadReport:
    """Execute the query set, optionally across concurrent workers.

    Result id lists are deterministic regardless of worker count (caching is
    transparent to results); only timing and cache/I/O counters depend on
    interleaving. reset_per_query isolates queries and therefore runs them
    sequentially. Missing ground truth leaves recall unreported.
    """
    queries = np.asarray(queries, dtype=np.float32)
    if queries.ndim != 2:
        raise ValueError("queries must be a 2-d array")
    Q = queries.shape[0]
    if Q < 1:
        raise ValueError("workload needs at least one query")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    workers = max(1, workers)
    gt1 = gt[:, 0].astype(np.int64) if gt is not None else None

    def one(qi: int) -> tuple[list[tuple[int, float]], SearchStats]:
        nn1 = int(gt1[qi]) if gt1 is not None else None
        return beam_search(
            queries[qi], params, reader, layout, cache, codebook, codes, true_nn=nn1
        )

    first_results: list[list[int]] = []
    first_stats: list[SearchStats] = []
    all_stats: list[SearchStats] = []
    started = time.perf_counter()
    for rep in range(repetitions):
        if rep and reset_between_reps:
            cache.reset_dynamic()
        if workers == 1 or reset_per_query:
            outs = []
            for qi in range(Q):
                if reset_per_query:
                    cache.reset_dynamic()
                outs.append(one(qi))
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outs = list(pool.map(one, range(Q)))
        if rep == 0:
            first_results = [[nid for nid, _ in res] for res, _ in outs]
            first_stats = [st for _, st in outs]
        all_stats.extend(st for _, st in outs)
    wall = time.perf_counter() - started

    mean_recall: float | None = None
    if gt is not None:
        if gt.shape[0] != Q:
            raise ValueError(f"ground truth has {gt.shape[0]} rows for {Q} queries")
        if gt.shape[1] < params.k:
            raise ValueError(
                f"ground truth holds {gt.shape[1]} ids per query, need k={params.k}"
            )
        recalls = [
            recall_at_k(np.array(ids), gt[qi, : params.k])
            for qi, ids in enumerate(first_results)
        ]
        mean_recall = float(np.mean(recalls))

    lat = np.array([st.latency_s for st in all_stats]) * 1e3
    hits_total = HitStats()
    for st in all_stats:
        for phase in (1, 2):
            src = st.hits.for_phase(phase)
            dst = hits_total.for_phase(phase)
            dst.static_hits += src.static_hits
            dst.dynamic_hits += src.dynamic_hits
            dst.misses += src.misses

    return WorkloadReport(
        query_count=Q,
        repetitions=repetitions,
        workers=workers,
        wall_time_s=wall,
        qps=(Q * repetitions) / wall if wall > 0 else float("inf"),
        latency_mean_ms=float(lat.mean()),
        latency_p50_ms=float(np.percentile(lat, 50)),
        latency_p95_ms=float(np.percentile(lat, 95)),
        latency_p99_ms=float(np.percentile(lat, 99)),
        mean_recall=mean_recall,
        mean_io_ops=float(np.mean([st.io_ops for st in all_stats])),
        mean_pages_read=float(np.mean([st.pages_read for st in all_stats])),
        mean_bytes_read=float(np.mean([st.bytes_read for st in all_stats])),
        hit_rate_phase1=hits_total.phase1.hit_rate,
        hit_rate_phase2=hits_total.phase2.hit_rate,
        hits_total=hits_total,
        mean_transition_theta=float(np.mean([st.transition_iter_theta for st in all_stats])),
        mean_transition_panns=float(np.mean([st.transition_iter_panns for st in all_stats])),
        mean_iterations=float(np.mean([st.iterations for st in all_stats])),
        results=first_results,
        stats=first_stats,
    )
