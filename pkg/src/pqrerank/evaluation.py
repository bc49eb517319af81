"""Exact search, ground truth, recall@r and the benchmark report rows."""

from __future__ import annotations

import time
from dataclasses import dataclass, fields

import numpy as np

from .adc import AdcIndex, SearchResult, adc_search, map_queries, select_smallest
from .ivf import IvfIndex, IvfSearchParams, ivf_rerank, ivf_search
from .quant import as_vector, as_vectors
from .refine import rerank

BASE_BLOCK = 65536
QUERY_BLOCK = 128

METHODS = ("ADC", "ADC+R", "IVFADC", "IVFADC+R")


def squared_distances(rows: np.ndarray, x: np.ndarray) -> np.ndarray:
    """float64 squared L2 from each row to x, summed one dimension at a time
    so the result matches a plain sequential loop bit for bit."""
    diff = rows.astype(np.float64) - x
    np.square(diff, out=diff)
    out = diff[:, 0].copy()
    for j in range(1, diff.shape[1]):
        out += diff[:, j]
    return out


def exact_search(base, x, k: int) -> SearchResult:
    """True k nearest neighbors by squared L2, float64, (dist, id) order.

    k larger than the base size returns every vector.
    """
    base = as_vectors(base, name="base vectors")
    x = as_vector(x, base.shape[1], "query").astype(np.float64)
    n = base.shape[0]
    dists = np.empty(n, dtype=np.float64)
    for start in range(0, n, BASE_BLOCK):
        block = base[start:start + BASE_BLOCK]
        dists[start:start + len(block)] = squared_distances(block, x)
    return select_smallest(dists, np.arange(n, dtype=np.int64), min(k, n))


@dataclass
class GroundTruth:
    """Per-query neighbor ids (nq, k), nearest first, with optional squared
    distances."""

    ids: np.ndarray
    dists: np.ndarray | None = None

    def __len__(self):
        return len(self.ids)

    @property
    def nearest(self) -> np.ndarray:
        return self.ids[:, 0]

    def head(self, nq: int) -> GroundTruth:
        return GroundTruth(self.ids[:nq], None if self.dists is None else self.dists[:nq])


def _groundtruth_block(base: np.ndarray, base_norms: np.ndarray, q: np.ndarray, k: int):
    """Exact top-k for a block of queries.

    Candidates come from the expanded ||x||^2 - 2x.y + ||y||^2 form; anything
    within a rounding margin of each block's k-th value is kept and then
    re-scored with direct differences.
    """
    n = base.shape[0]
    q_norms = np.einsum("ij,ij->i", q, q)
    cand = [[] for _ in range(len(q))]
    for start in range(0, n, BASE_BLOCK):
        chunk = base[start:start + BASE_BLOCK].astype(np.float64)
        approx = q @ chunk.T
        approx *= -2.0
        approx += base_norms[start:start + len(chunk)]
        approx += q_norms[:, None]
        kk = min(k, len(chunk))
        kth = np.partition(approx, kk - 1, axis=1)[:, kk - 1]
        margin = 1e-9 * (q_norms + base_norms[start:start + len(chunk)].max()) + 1e-12
        rows, cols = np.nonzero(approx <= (kth + margin)[:, None])
        for i in range(len(q)):
            cand[i].append(cols[rows == i] + start)
    out_ids = np.empty((len(q), k), dtype=np.int32)
    out_d = np.empty((len(q), k), dtype=np.float32)
    for i, parts in enumerate(cand):
        ids = np.concatenate(parts)
        res = select_smallest(squared_distances(base[ids], q[i]), ids.astype(np.int64), k)
        out_ids[i], out_d[i] = res.ids, res.dists
    return out_ids, out_d


def compute_groundtruth(base, queries, k: int, threads: int = 1) -> GroundTruth:
    """Batched exact search; k is capped at the base size."""
    base = as_vectors(base, name="base vectors")
    queries = as_vectors(queries, base.shape[1], "queries")
    k = min(k, base.shape[0])
    if k < 1:
        raise ValueError("ground truth needs k >= 1 and a non-empty base")
    base_norms = np.einsum("ij,ij->i", base.astype(np.float64), base.astype(np.float64))
    blocks = [queries[s:s + QUERY_BLOCK].astype(np.float64)
              for s in range(0, len(queries), QUERY_BLOCK)]
    parts = map_queries(lambda q: _groundtruth_block(base, base_norms, q, k), blocks, threads)
    if not parts:
        return GroundTruth(np.empty((0, k), np.int32), np.empty((0, k), np.float32))
    return GroundTruth(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


def _result_ids(res) -> np.ndarray:
    return res.ids if isinstance(res, SearchResult) else np.asarray(res)


def recall_at_r(results, gt: GroundTruth, r: int) -> float:
    """Fraction of queries whose true nearest neighbor is among the first r
    returned ids."""
    if r < 1:
        raise ValueError("r must be >= 1")
    if len(results) != len(gt):
        raise ValueError(f"misaligned counts: {len(results)} results for {len(gt)} ground-truth queries")
    if len(gt) == 0:
        raise ValueError("no queries to evaluate")
    hits = sum(bool(np.any(_result_ids(res)[:r] == nn)) for res, nn in zip(results, gt.nearest))
    return hits / len(gt)


def recall_curve(results, gt: GroundTruth, ranks=(1, 10, 100)) -> list[tuple[int, float]]:
    """(r, recall@r) for ascending ranks; rank of the true neighbor is
    found once per query."""
    ranks = sorted(ranks)
    if len(results) != len(gt):
        raise ValueError(f"misaligned counts: {len(results)} results for {len(gt)} ground-truth queries")
    pos = np.full(len(gt), np.inf)
    for i, (res, nn) in enumerate(zip(results, gt.nearest)):
        hit = np.flatnonzero(_result_ids(res) == nn)
        if len(hit):
            pos[i] = hit[0]
    return [(r, float(np.mean(pos < r))) for r in ranks]


@dataclass
class BenchReport:
    method: str
    m: int
    mprime: int
    c: int
    v: int
    k: int
    kprime: int
    n: int
    queries: int
    recall_1: float
    recall_10: float
    recall_100: float
    time_per_query: float
    bytes_per_vector: int

    def row(self) -> list[str]:
        out = []
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "time_per_query":
                out.append(f"{val:.6f}")
            elif isinstance(val, float):
                out.append(f"{val:.4f}")
            else:
                out.append(str(val))
        return out


REPORT_COLUMNS = [f.name for f in fields(BenchReport)]


def reports_tsv(reports, timing: bool = True) -> str:
    """Tab-separated rows with a header, stable column order. ``timing=False``
    blanks the time column so reports are byte-comparable across runs."""
    lines = ["\t".join(REPORT_COLUMNS)]
    t = REPORT_COLUMNS.index("time_per_query")
    for rep in reports:
        row = rep.row()
        if not timing:
            row[t] = "-"
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


def reports_table(reports, timing: bool = True) -> str:
    head = ["method", "m", "m'", "c", "v", "n", "R@1", "R@10", "R@100", "s/query", "bytes/vec"]
    rows = [[r.method, str(r.m), str(r.mprime), str(r.c or "-"), str(r.v or "-"), str(r.n),
             f"{r.recall_1:.3f}", f"{r.recall_10:.3f}", f"{r.recall_100:.3f}",
             f"{r.time_per_query:.5f}" if timing else "-", str(r.bytes_per_vector)]
            for r in reports]
    widths = [max(len(x) for x in col) for col in zip(head, *rows)]
    fmt = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in rows]) + "\n"


def make_searcher(index, method: str, k: int, kprime: int, v: int):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    missing = []
    if method.startswith("IVF") and not isinstance(index, IvfIndex):
        missing.append("an IVF index (build with --coarse/-c)")
    if not method.startswith("IVF") and not isinstance(index, AdcIndex):
        missing.append("an exhaustive ADC index")
    if method.endswith("+R") and getattr(index, "refine", None) is None:
        missing.append("refinement codes (train and build with --mprime > 0)")
    if missing:
        raise ValueError(f"{method} needs " + " and ".join(missing))

    if method == "ADC":
        return lambda x: adc_search(index, x, k)
    if method == "ADC+R":
        def search(x):
            short = adc_search(index, x, kprime)
            return rerank(index, x, short, min(k, len(short)))
        return search
    params = IvfSearchParams(v, kprime if method == "IVFADC+R" else k)
    if method == "IVFADC":
        return lambda x: ivf_search(index, x, params)

    def search(x):
        short = ivf_search(index, x, params)
        if not len(short):
            return short
        return ivf_rerank(index, x, short, min(k, len(short)))
    return search


def timed_search(index, queries, method: str, k: int, kprime: int | None = None, v: int = 0):
    """Run one method over all queries; returns (results, mean seconds/query).
    Each query is timed individually on a single thread."""
    kprime = 2 * k if kprime is None else kprime
    search = make_searcher(index, method, k, kprime, v)
    queries = as_vectors(queries, index.d, "queries")
    results, total = [], 0.0
    for x in queries:
        t0 = time.perf_counter()
        results.append(search(x))
        total += time.perf_counter() - t0
    return results, total / max(len(queries), 1)


def run_experiment(index, queries, gt: GroundTruth, method: str, k: int = 100,
                   kprime: int | None = None, v: int = 0, n_queries: int = 1000) -> BenchReport:
    """Search the first ``n_queries`` queries and report recall and timing.
    Index build time is not included."""
    kprime = 2 * k if kprime is None else kprime
    nq = min(n_queries, len(queries), len(gt))
    results, tpq = timed_search(index, queries[:nq], method, k, kprime, v)
    curve = dict(recall_curve(results, gt.head(nq), (1, 10, 100)))
    refine = getattr(index, "refine", None)
    ivf = isinstance(index, IvfIndex)
    return BenchReport(
        method=method, m=index.pq.m, mprime=refine.m if refine is not None and method.endswith("+R") else 0,
        c=index.c if ivf else 0, v=v if ivf else 0, k=k,
        kprime=kprime if method.endswith("+R") else k, n=index.n, queries=nq,
        recall_1=curve[1], recall_10=curve[10], recall_100=curve[100], time_per_query=tpq,
        bytes_per_vector=index.pq.m + (4 if ivf else 0) + (refine.m if method.endswith("+R") else 0),
    )


