"""Benchmark CLI: synth, build, layout, gt, calibrate, query, bench, compare.

Every run echoes its full effective configuration into its output, reports are
line-delimited key=value text, and exit codes are 0 (ok), 2 (usage/argument),
3 (data/format), 4 (internal invariant violation).

Flags can be pre-set through environment variables: DISKVEC_<FLAG> with the
flag upper-cased and dashes turned into underscores (explicit flags win).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import diskstore, graphbuild, layout as layoutmod, pqcodec, search, vecdata
from .cache import CacheConfig, HybridCache, preload_static
from .errors import FormatError, InvariantError

ENV_PREFIX = "DISKVEC_"

GRAPH_FILE = "graph.bin"
PQ_FILE = "pq.bin"
INDEX_FILE = "index.bin"
LAYOUT_FILE = "layout.bin"
THETA_FILE = "theta.txt"
BUILD_META_FILE = "build_meta.txt"

# report keys that vary run to run even under fixed seeds
TIMING_KEYS = (
    "qps",
    "wall_time_s",
    "latency_mean_ms",
    "latency_p50_ms",
    "latency_p95_ms",
    "latency_p99_ms",
)


def _env_default(flag: str, fallback, cast):
    raw = os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"))
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"bad value for {ENV_PREFIX}{flag.upper().replace('-', '_')}: {raw!r}") from exc


def _fmt(v) -> str:
    if v is None:
        return "unavailable"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _emit_report(pairs: list[tuple[str, object]], out_path: str | None) -> None:
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in pairs)
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def parse_report(path: str | Path) -> dict[str, str]:
    """Read a key=value report back into a dict (keys keep file order)."""
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        out[key] = value
    return out


def _require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _load_dataset(path: str) -> vecdata.VectorDataset:
    return vecdata.load_fvecs(_require_file(path, "dataset file"))


# ---------------------------------------------------------------- subcommands


def cmd_synth(args: argparse.Namespace) -> None:
    """Gaussian-blob generator (synthetic stand-in for the public corpora;
    not derived from any published dataset)."""
    if args.n < 1 or args.dim < 1 or args.blobs < 1:
        raise ValueError("n, dim, and blobs must all be positive")
    rng = np.random.default_rng(args.seed)
    centers = rng.normal(0.0, args.center_spread, size=(args.blobs, args.dim))
    membership = rng.integers(0, args.blobs, size=args.n)
    base = centers[membership] + rng.normal(0.0, args.spread, size=(args.n, args.dim))
    vecdata.write_fvecs(args.out, base.astype(np.float32))
    pairs = [
        ("command", "synth"),
        ("out", args.out),
        ("n", args.n),
        ("dim", args.dim),
        ("blobs", args.blobs),
        ("spread", float(args.spread)),
        ("center_spread", float(args.center_spread)),
        ("seed", args.seed),
        ("queries", args.queries),
    ]
    if args.queries > 0:
        if not args.queries_out:
            raise ValueError("--queries-out is required when --queries > 0")
        q_membership = rng.integers(0, args.blobs, size=args.queries)
        qs = centers[q_membership] + rng.normal(0.0, args.spread, size=(args.queries, args.dim))
        vecdata.write_fvecs(args.queries_out, qs.astype(np.float32))
        pairs.append(("queries_out", args.queries_out))
    _emit_report(pairs, None)


def cmd_build(args: argparse.Namespace) -> None:
    dataset = _load_dataset(args.dataset)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        graph = graphbuild.build_graph(
            dataset, R=args.r, L_build=args.l_build, alpha=args.alpha, seed=args.seed
        )
        pq_m = args.pq_m if args.pq_m > 0 else pqcodec.default_subspace_count(dataset.dim)
        pq_c = min(args.pq_c, dataset.n)
        codebook = pqcodec.train(dataset, m=pq_m, c=pq_c, seed=args.seed, iters=args.pq_iters)
        codes = pqcodec.encode_dataset(dataset, codebook)
    except ValueError as exc:
        raise ValueError(f"build failed: {exc}") from exc
    graphbuild.save_graph(out_dir / GRAPH_FILE, graph)
    pqcodec.save_pq(out_dir / PQ_FILE, codebook, codes)
    pairs = [
        ("command", "build"),
        ("n", dataset.n),
        ("dim", dataset.dim),
        ("r", args.r),
        ("l_build", args.l_build),
        ("alpha", float(args.alpha)),
        ("seed", args.seed),
        ("pq_m", pq_m),
        ("pq_c", pq_c),
        ("pq_iters", args.pq_iters),
        ("entry_id", graph.entry_id),
    ]
    (out_dir / BUILD_META_FILE).write_text("".join(f"{k}={_fmt(v)}\n" for k, v in pairs))
    _emit_report(pairs + [("out_dir", str(out_dir))], None)


def cmd_layout(args: argparse.Namespace) -> None:
    dataset = _load_dataset(args.dataset)
    index_dir = Path(args.index_dir)
    graph = graphbuild.load_graph(_require_file(str(index_dir / GRAPH_FILE), "graph file"))
    if graph.n != dataset.n:
        raise ValueError(
            f"graph has {graph.n} nodes but dataset has {dataset.n}; wrong --dataset?"
        )
    cap = diskstore.page_capacity_for(args.page_size, dataset.dim, graph.R)
    if args.kind == "insertion":
        lm = layoutmod.build_insertion_layout(dataset, cap)
        kind_name = "insertion-order"
        k_used = 1
    else:
        k_used = args.k_clusters if args.k_clusters > 0 else layoutmod.default_cluster_count(
            dataset.n, cap
        )
        lm = layoutmod.build_similarity_layout(
            dataset, cap, k_clusters=k_used, max_iters=args.kmeans_iters, seed=args.seed
        )
        kind_name = "similarity"
    header = diskstore.write_index(
        dataset,
        graph,
        lm,
        index_dir / INDEX_FILE,
        page_size=args.page_size,
        layout_kind=kind_name,
    )
    layoutmod.save_layout(index_dir / LAYOUT_FILE, lm)
    _emit_report(
        [
            ("command", "layout"),
            ("index_dir", str(index_dir)),
            ("kind", kind_name),
            ("k_clusters", k_used),
            ("page_size", args.page_size),
            ("page_capacity", header.page_capacity),
            ("total_pages", header.total_pages),
            ("kmeans_iters", args.kmeans_iters),
            ("seed", args.seed),
        ],
        None,
    )


def cmd_gt(args: argparse.Namespace) -> None:
    dataset = _load_dataset(args.dataset)
    queries = _load_dataset(args.queries)
    if queries.dim != dataset.dim:
        raise ValueError(f"query dim {queries.dim} != dataset dim {dataset.dim}")
    ids = vecdata.ground_truth_batch(dataset, queries.vectors, args.k)
    vecdata.write_ivecs(args.out, ids.astype(np.int32))
    _emit_report(
        [
            ("command", "gt"),
            ("dataset", args.dataset),
            ("queries", args.queries),
            ("k", args.k),
            ("query_count", queries.n),
            ("out", args.out),
        ],
        None,
    )


def _open_index(index_dir: Path):
    reader = diskstore.IndexReader(_require_file(str(index_dir / INDEX_FILE), "index file"))
    lm = layoutmod.load_layout(_require_file(str(index_dir / LAYOUT_FILE), "layout sidecar"))
    codebook, codes = pqcodec.load_pq(_require_file(str(index_dir / PQ_FILE), "PQ sidecar"))
    return reader, lm, codebook, codes


def cmd_calibrate(args: argparse.Namespace) -> None:
    dataset = _load_dataset(args.dataset)
    index_dir = Path(args.index_dir)
    reader, lm, codebook, codes = _open_index(index_dir)
    try:
        cal = search.calibrate_theta(
            dataset,
            reader,
            lm,
            codebook,
            codes,
            k=args.k,
            l=args.l,
            sample_fraction=args.fraction,
            seed=args.seed,
            beam_width=args.beam_width,
            window_pages=args.window_pages,
        )
    finally:
        reader.close()
    pairs = [
        ("theta", float(cal.theta)),
        ("k", args.k),
        ("l", args.l),
        ("fraction", float(args.fraction)),
        ("seed", args.seed),
        ("sample_count", cal.sample_count),
        ("usable_count", cal.usable_count),
        ("early_count", cal.early_count),
    ]
    (index_dir / THETA_FILE).write_text("".join(f"{k}={_fmt(v)}\n" for k, v in pairs))
    _emit_report([("command", "calibrate"), ("index_dir", str(index_dir))] + pairs, None)


def _sidecar_theta(index_dir: Path) -> float | None:
    theta_path = index_dir / THETA_FILE
    if not theta_path.is_file():
        return None
    for line in theta_path.read_text().splitlines():
        key, _, value = line.partition("=")
        if key == "theta":
            return float(value)
    return None


def _resolve_theta(args: argparse.Namespace, index_dir: Path) -> tuple[float, str]:
    if args.theta is not None:
        return args.theta, "flag"
    sidecar = _sidecar_theta(index_dir)
    if sidecar is not None:
        return sidecar, "sidecar"
    return 0.5, "default"


def _resolve_budget(args: argparse.Namespace, index_path: Path, header) -> int:
    if args.cache_budget is not None and args.cache_budget >= 0:
        return args.cache_budget
    file_bytes = index_path.stat().st_size
    return int(0.01 * file_bytes) // diskstore.slot_size(header.dim, header.R)


def _build_cache(args, index_dir: Path, reader, lm) -> tuple[HybridCache, CacheConfig, int]:
    graph = graphbuild.load_graph(_require_file(str(index_dir / GRAPH_FILE), "graph file"))
    budget = _resolve_budget(args, index_dir / INDEX_FILE, reader.header)
    cfg = CacheConfig(
        total_budget_nodes=budget,
        static_fraction=args.static_frac,
        policy=args.policy,
        seed=args.cache_seed,
    )
    static_entries = preload_static(graph, reader, lm, cfg.static_capacity_nodes)
    reader.stats.reset()  # preload reads are setup cost, not workload I/O
    cache = HybridCache(
        static_entries,
        cfg.dynamic_capacity_pages(reader.header.page_capacity),
        lm,
        policy=cfg.policy,
        seed=cfg.seed,
    )
    return cache, cfg, budget


def cmd_query(args: argparse.Namespace) -> None:
    index_dir = Path(args.index_dir)
    queries = _load_dataset(args.queries)
    if not 0 <= args.qid < queries.n:
        raise ValueError(f"--qid {args.qid} out of range [0, {queries.n})")
    reader, lm, codebook, codes = _open_index(index_dir)
    try:
        theta, theta_source = _resolve_theta(args, index_dir)
        cache, cfg, budget = _build_cache(args, index_dir, reader, lm)
        params = search.SearchParams(
            k=args.k,
            l=args.l,
            beam_width=args.beam_width,
            theta=theta,
            window_pages=args.window_pages,
        )
        results, st = search.beam_search(
            queries.vectors[args.qid], params, reader, lm, cache, codebook, codes
        )
    finally:
        reader.close()
    if args.trace:
        lines = [
            f"{rec.iteration},{rec.node_id},{rec.exact_dist:.6f},{rec.phase},{rec.hit_kind}\n"
            for rec in st.trace
        ]
        Path(args.trace).write_text("".join(lines))
    pairs: list[tuple[str, object]] = [
        ("command", "query"),
        ("index_dir", str(index_dir)),
        ("qid", args.qid),
        ("k", args.k),
        ("l", args.l),
        ("beam_width", args.beam_width),
        ("theta", float(theta)),
        ("theta_source", theta_source),
        ("window_pages", args.window_pages),
        ("cache_budget_nodes", budget),
        ("static_fraction", float(cfg.static_fraction)),
        ("policy", cfg.policy),
        ("cache_seed", cfg.seed),
        ("iterations", st.iterations),
        ("transition_iter_theta", st.transition_iter_theta),
        ("transition_iter_panns", st.transition_iter_panns),
        ("io_ops", st.io_ops),
        ("pages_read", st.pages_read),
        ("bytes_read", st.bytes_read),
        ("latency_ms", st.latency_s * 1e3),
    ]
    for rank, (nid, dist) in enumerate(results):
        pairs.append((f"result_{rank}", f"{nid}:{dist:.6f}"))
    _emit_report(pairs, args.out)


def _run_bench(args, index_dir: Path) -> tuple[list[tuple[str, object]], search.WorkloadReport]:
    queries = _load_dataset(args.queries)
    gt = None
    if args.gt:
        gt = vecdata.load_ivecs(_require_file(args.gt, "ground truth file"))
        if gt.shape[0] != queries.n:
            raise ValueError(
                f"ground truth rows ({gt.shape[0]}) != query count ({queries.n})"
            )
    reader, lm, codebook, codes = _open_index(index_dir)
    try:
        if queries.dim != reader.header.dim:
            raise ValueError(
                f"query dim {queries.dim} != index dim {reader.header.dim}"
            )
        bypass = "inactive"
        if args.os_bypass:
            bypass = "dontneed-advised" if reader.advise_drop_os_cache() else "unsupported"
        theta, theta_source = _resolve_theta(args, index_dir)
        cache, cfg, budget = _build_cache(args, index_dir, reader, lm)
        params = search.SearchParams(
            k=args.k,
            l=args.l,
            beam_width=args.beam_width,
            theta=theta,
            window_pages=args.window_pages,
        )
        workers = args.workers if args.workers > 0 else min(32, os.cpu_count() or 1)
        report = search.run_workload(
            queries.vectors,
            params,
            reader,
            lm,
            cache,
            codebook,
            codes,
            gt=gt,
            workers=workers,
            repetitions=args.repetitions,
            reset_per_query=args.reset_per_query,
        )
        reader_ops, reader_pages, reader_bytes = reader.stats.snapshot()
    finally:
        reader.close()

    header = reader.header
    hits = report.hits_total
    pairs: list[tuple[str, object]] = [
        ("command", "bench"),
        ("index_dir", str(index_dir)),
        ("queries_file", args.queries),
        ("gt_file", args.gt or None),
        ("layout_kind", header.layout_kind),
        ("n", header.n),
        ("dim", header.dim),
        ("r", header.R),
        ("page_size", header.page_size),
        ("page_capacity", header.page_capacity),
        ("total_pages", header.total_pages),
        ("entry_id", header.entry_id),
        ("k", args.k),
        ("l", args.l),
        ("beam_width", args.beam_width),
        ("theta", float(theta)),
        ("theta_source", theta_source),
        ("window_pages", args.window_pages),
        ("cache_budget_nodes", budget),
        ("static_fraction", float(cfg.static_fraction)),
        ("static_capacity_nodes", cfg.static_capacity_nodes),
        ("dynamic_capacity_pages", cfg.dynamic_capacity_pages(header.page_capacity)),
        ("policy", cfg.policy),
        ("cache_seed", cfg.seed),
        ("workers", report.workers),
        ("repetitions", report.repetitions),
        ("reset_per_query", bool(args.reset_per_query)),
        ("os_cache_bypass", bypass),
        ("query_count", report.query_count),
        ("qps", report.qps),
        ("wall_time_s", report.wall_time_s),
        ("latency_mean_ms", report.latency_mean_ms),
        ("latency_p50_ms", report.latency_p50_ms),
        ("latency_p95_ms", report.latency_p95_ms),
        ("latency_p99_ms", report.latency_p99_ms),
        ("recall_at_k", report.mean_recall),
        ("mean_io_ops", report.mean_io_ops),
        ("mean_pages_read", report.mean_pages_read),
        ("mean_bytes_read", report.mean_bytes_read),
        ("hit_rate_phase1", report.hit_rate_phase1),
        ("hit_rate_phase2", report.hit_rate_phase2),
        ("phase1_static_hits", hits.phase1.static_hits),
        ("phase1_dynamic_hits", hits.phase1.dynamic_hits),
        ("phase1_misses", hits.phase1.misses),
        ("phase2_static_hits", hits.phase2.static_hits),
        ("phase2_dynamic_hits", hits.phase2.dynamic_hits),
        ("phase2_misses", hits.phase2.misses),
        ("mean_transition_iter_theta", report.mean_transition_theta),
        ("mean_transition_iter_panns", report.mean_transition_panns),
        ("mean_iterations", report.mean_iterations),
        ("reader_total_io_ops", reader_ops),
        ("reader_total_pages_read", reader_pages),
        ("reader_total_bytes_read", reader_bytes),
    ]
    return pairs, report


def cmd_bench(args: argparse.Namespace) -> None:
    pairs, report = _run_bench(args, Path(args.index_dir))
    if args.results_out:
        lines = [
            " ".join([str(qi)] + [str(nid) for nid in ids])
            for qi, ids in enumerate(report.results)
        ]
        Path(args.results_out).write_text("\n".join(lines) + "\n")
    if args.trace_out:
        rows = []
        for qi, st in enumerate(report.stats):
            rows.extend(
                f"{qi},{rec.iteration},{rec.node_id},{rec.exact_dist:.6f},{rec.phase},{rec.hit_kind}\n"
                for rec in st.trace
            )
        Path(args.trace_out).write_text("".join(rows))
    _emit_report(pairs, args.out)


def cmd_compare(args: argparse.Namespace) -> None:
    pairs_a, report_a = _run_bench(args, Path(args.a_index_dir))
    pairs_b, report_b = _run_bench(args, Path(args.b_index_dir))
    pairs: list[tuple[str, object]] = [("command", "compare")]
    pairs.extend((f"a_{k}", v) for k, v in pairs_a if k != "command")
    pairs.extend((f"b_{k}", v) for k, v in pairs_b if k != "command")
    ratio = report_a.mean_io_ops / report_b.mean_io_ops if report_b.mean_io_ops else float("inf")
    pairs.extend(
        [
            ("compare_io_ops_a", report_a.mean_io_ops),
            ("compare_io_ops_b", report_b.mean_io_ops),
            ("compare_io_ops_ratio_a_over_b", ratio),
            ("compare_io_reduction_pct_a_vs_b", (1.0 - ratio) * 100.0),
            ("compare_phase2_hit_rate_a", report_a.hit_rate_phase2),
            ("compare_phase2_hit_rate_b", report_b.hit_rate_phase2),
            ("compare_recall_a", report_a.mean_recall),
            ("compare_recall_b", report_b.mean_recall),
            ("compare_qps_ratio_a_over_b", report_a.qps / report_b.qps if report_b.qps else float("inf")),
        ]
    )
    _emit_report(pairs, args.out)


# -------------------------------------------------------------------- parser


def _add_cache_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--cache-budget",
        type=int,
        default=_env_default("cache-budget", None, int),
        help="cache budget in node records (default: 1%% of the index file)",
    )
    p.add_argument(
        "--static-frac",
        type=float,
        default=_env_default("static-frac", 0.2, float),
        help="fraction of the budget held by the static cache (default 0.2)",
    )
    p.add_argument(
        "--policy",
        choices=("LFU", "FIFO", "RANDOM"),
        default=_env_default("policy", "LFU", str),
        help="dynamic cache replacement policy (default LFU)",
    )
    p.add_argument(
        "--cache-seed",
        type=int,
        default=_env_default("cache-seed", 0, int),
        help="seed for the RANDOM policy",
    )


def _add_search_flags(p: argparse.ArgumentParser, k_default: int = 100) -> None:
    p.add_argument("--k", type=int, default=_env_default("k", k_default, int))
    p.add_argument("--l", type=int, default=_env_default("l", 128, int))
    p.add_argument(
        "--beam-width", type=int, default=_env_default("beam-width", 4, int)
    )
    p.add_argument(
        "--theta",
        type=float,
        default=_env_default("theta", None, float),
        help="transition threshold in (0,1); default: calibrated sidecar value, else 0.5",
    )
    p.add_argument(
        "--window-pages", type=int, default=_env_default("window-pages", 2, int)
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diskvec",
        description="Disk-resident ANN graph index benchmark tool",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth", help="generate a Gaussian-blob dataset (fvecs)")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=_env_default("n", 10000, int))
    p.add_argument("--dim", type=int, default=_env_default("dim", 16, int))
    p.add_argument("--blobs", type=int, default=_env_default("blobs", 8, int))
    p.add_argument("--spread", type=float, default=_env_default("spread", 1.0, float))
    p.add_argument(
        "--center-spread",
        type=float,
        default=_env_default("center-spread", 10.0, float),
    )
    p.add_argument("--seed", type=int, default=_env_default("seed", 0, int))
    p.add_argument("--queries", type=int, default=0, help="also emit this many query vectors")
    p.add_argument("--queries-out", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="build the graph and PQ sidecars")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--r", type=int, default=_env_default("r", 32, int))
    p.add_argument("--l-build", type=int, default=_env_default("l-build", 64, int))
    p.add_argument("--alpha", type=float, default=_env_default("alpha", 1.2, float))
    p.add_argument("--seed", type=int, default=_env_default("seed", 0, int))
    p.add_argument("--pq-m", type=int, default=_env_default("pq-m", 0, int), help="0 = auto (dim/8)")
    p.add_argument("--pq-c", type=int, default=_env_default("pq-c", 256, int))
    p.add_argument("--pq-iters", type=int, default=_env_default("pq-iters", 25, int))
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("layout", help="lay the index out on disk and write the index file")
    p.add_argument("--index-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=("insertion", "similarity"), default="similarity")
    p.add_argument(
        "--k-clusters", type=int, default=_env_default("k-clusters", 0, int), help="0 = auto"
    )
    p.add_argument(
        "--page-size", type=int, default=_env_default("page-size", 4096, int)
    )
    p.add_argument(
        "--kmeans-iters", type=int, default=_env_default("kmeans-iters", 25, int)
    )
    p.add_argument("--seed", type=int, default=_env_default("seed", 0, int))
    p.set_defaults(func=cmd_layout)

    p = sub.add_parser("gt", help="write brute-force ground truth (ivecs)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--k", type=int, default=_env_default("k", 100, int))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gt)

    p = sub.add_parser("calibrate", help="estimate the transition threshold theta")
    p.add_argument("--index-dir", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, default=_env_default("k", 100, int))
    p.add_argument("--l", type=int, default=_env_default("l", 128, int))
    p.add_argument(
        "--fraction", type=float, default=_env_default("fraction", 0.01, float)
    )
    p.add_argument("--seed", type=int, default=_env_default("seed", 0, int))
    p.add_argument("--beam-width", type=int, default=_env_default("beam-width", 4, int))
    p.add_argument(
        "--window-pages", type=int, default=_env_default("window-pages", 2, int)
    )
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("query", help="run one query and print results plus stats")
    p.add_argument("--index-dir", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qid", type=int, default=0)
    _add_search_flags(p, k_default=10)
    _add_cache_flags(p)
    p.add_argument("--trace", default=None, help="write the per-expansion trace here")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="run a query workload and write a report")
    p.add_argument("--index-dir", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt", default=None)
    _add_search_flags(p)
    _add_cache_flags(p)
    p.add_argument("--workers", type=int, default=_env_default("workers", 0, int), help="0 = auto")
    p.add_argument(
        "--repetitions", type=int, default=_env_default("repetitions", 1, int)
    )
    p.add_argument("--reset-per-query", action="store_true")
    p.add_argument("--os-bypass", action="store_true", help="advise the OS to drop its cached index pages")
    p.add_argument("--out", default=None)
    p.add_argument("--results-out", default=None, help="dump per-query result ids")
    p.add_argument("--trace-out", default=None, help="dump per-query expansion traces")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("compare", help="bench two index dirs under one configuration")
    p.add_argument("--a-index-dir", required=True)
    p.add_argument("--b-index-dir", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--gt", default=None)
    _add_search_flags(p)
    _add_cache_flags(p)
    p.add_argument("--workers", type=int, default=_env_default("workers", 0, int))
    p.add_argument(
        "--repetitions", type=int, default=_env_default("repetitions", 1, int)
    )
    p.add_argument("--reset-per-query", action="store_true")
    p.add_argument("--os-bypass", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InvariantError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
