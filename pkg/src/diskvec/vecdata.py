"""Vector dataset handling: fvecs/ivecs IO, exact distances, ground truth, recall.

This is the oracle layer: everything else in the package is validated against
the brute-force results computed here. Vectors are stored single-precision;
distance sums accumulate in double precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError


@dataclass
class VectorDataset:
    """A collection of float32 vectors with implicit node ids 0..n-1.

    Immutable by convention after construction; safe to share across
    concurrent query workers.
    """

    vectors: np.ndarray  # (n, dim) float32, C-contiguous

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.vectors, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"vectors must be a 2-d array, got ndim={arr.ndim}")
        if arr.shape[0] < 1:
            raise ValueError("dataset must contain at least one vector")
        if arr.shape[1] < 1:
            raise ValueError("vector dimensionality must be positive")
        self.vectors = arr

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector(self, node_id: int) -> np.ndarray:
        return self.vectors[node_id]


def load_fvecs(path: str | Path) -> VectorDataset:
    """Read an fvecs file: per record a little-endian int32 dim then dim float32s.

    Raises FormatError naming the byte offset for truncated records and naming
    both dimensions for inconsistent records; an empty file is an error.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) == 0:
        raise FormatError(f"{path}: empty fvecs file (no records)")
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated record at byte offset 0")
    dim = struct.unpack_from("<i", raw, 0)[0]
    if dim <= 0:
        raise FormatError(f"{path}: invalid dimension {dim} at byte offset 0")
    rec_size = 4 + 4 * dim

    # Fast path: uniform records decode in one shot. Fall back to a scan only
    # to locate the precise offending offset.
    if len(raw) % rec_size == 0:
        arr = np.frombuffer(raw, dtype=np.dtype([("d", "<i4"), ("v", "<f4", (dim,))]))
        dims = arr["d"]
        if bool(np.all(dims == dim)):
            return VectorDataset(arr["v"].copy())
    _scan_fvecs_for_error(path, raw, dim)
    raise FormatError(f"{path}: malformed fvecs file")  # pragma: no cover


def _scan_fvecs_for_error(path: Path, raw: bytes, dim: int) -> None:
    """Walk records one by one and raise a FormatError at the first defect."""
    off = 0
    while off < len(raw):
        if off + 4 > len(raw):
            raise FormatError(f"{path}: truncated record header at byte offset {off}")
        d = struct.unpack_from("<i", raw, off)[0]
        if d <= 0:
            raise FormatError(f"{path}: invalid dimension {d} at byte offset {off}")
        if d != dim:
            raise FormatError(
                f"{path}: inconsistent dimensions at byte offset {off}: "
                f"record declares {d}, expected {dim}"
            )
        if off + 4 + 4 * d > len(raw):
            raise FormatError(f"{path}: truncated record at byte offset {off}")
        off += 4 + 4 * d


def write_fvecs(path: str | Path, vectors: np.ndarray) -> None:
    """Write vectors (n, dim) as an fvecs file, little-endian throughout."""
    arr = np.ascontiguousarray(vectors, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError("vectors must be a 2-d array")
    n, dim = arr.shape
    out = np.empty(n, dtype=np.dtype([("d", "<i4"), ("v", "<f4", (dim,))]))
    out["d"] = dim
    out["v"] = arr
    Path(path).write_bytes(out.tobytes())


def load_ivecs(path: str | Path) -> np.ndarray:
    """Read an ivecs file into an (n, k) int32 array (same framing as fvecs)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) == 0:
        raise FormatError(f"{path}: empty ivecs file")
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated record at byte offset 0")
    k = struct.unpack_from("<i", raw, 0)[0]
    if k <= 0:
        raise FormatError(f"{path}: invalid record length {k} at byte offset 0")
    rec_size = 4 + 4 * k
    if len(raw) % rec_size != 0:
        bad = (len(raw) // rec_size) * rec_size
        raise FormatError(f"{path}: truncated record at byte offset {bad}")
    arr = np.frombuffer(raw, dtype=np.dtype([("k", "<i4"), ("v", "<i4", (k,))]))
    if not bool(np.all(arr["k"] == k)):
        idx = int(np.nonzero(arr["k"] != k)[0][0])
        raise FormatError(
            f"{path}: inconsistent record lengths at byte offset {idx * rec_size}: "
            f"record declares {int(arr['k'][idx])}, expected {k}"
        )
    return arr["v"].copy()


def write_ivecs(path: str | Path, ids: np.ndarray) -> None:
    """Write an (n, k) integer array as an ivecs file."""
    arr = np.ascontiguousarray(ids, dtype=np.int32)
    if arr.ndim != 2:
        raise ValueError("ids must be a 2-d array")
    n, k = arr.shape
    out = np.empty(n, dtype=np.dtype([("k", "<i4"), ("v", "<i4", (k,))]))
    out["k"] = k
    out["v"] = arr
    Path(path).write_bytes(out.tobytes())


def l2_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance with double-precision accumulation."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    d = a - b
    return float(np.sqrt(np.dot(d, d)))


def squared_distances_to(dataset: VectorDataset, q: np.ndarray) -> np.ndarray:
    """Squared L2 distance from q to every dataset vector, float64, shape (n,)."""
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.shape[0] != dataset.dim:
        raise ValueError(f"dimension mismatch: query {q.shape[0]} vs dataset {dataset.dim}")
    diff = dataset.vectors.astype(np.float64) - q
    return np.einsum("ij,ij->i", diff, diff)


def ground_truth_topk(dataset: VectorDataset, q: np.ndarray, k: int) -> np.ndarray:
    """Exact k nearest node ids by L2 distance, ascending; ties break by lower id.

    This is the brute-force oracle: every vector is scanned.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if k > dataset.n:
        raise ValueError(f"k={k} exceeds dataset size n={dataset.n}")
    d2 = squared_distances_to(dataset, q)
    ids = np.arange(dataset.n)
    order = np.lexsort((ids, d2))
    return order[:k].astype(np.int64)


def ground_truth_batch(dataset: VectorDataset, queries: np.ndarray, k: int) -> np.ndarray:
    """Exact top-k for a (Q, dim) query array; returns (Q, k) int64 ids."""
    queries = np.asarray(queries, dtype=np.float32)
    if queries.ndim != 2:
        raise ValueError("queries must be a 2-d array")
    out = np.empty((queries.shape[0], k), dtype=np.int64)
    for i in range(queries.shape[0]):
        out[i] = ground_truth_topk(dataset, queries[i], k)
    return out


def recall_at_k(result: np.ndarray, truth: np.ndarray) -> float:
    """|result ∩ truth| / k for two id lists of equal length k."""
    result = np.asarray(result).ravel()
    truth = np.asarray(truth).ravel()
    if result.shape[0] != truth.shape[0]:
        raise ValueError(
            f"result and truth must have equal length, got {result.shape[0]} vs {truth.shape[0]}"
        )
    k = truth.shape[0]
    return len(set(result.tolist()) & set(truth.tolist())) / k
