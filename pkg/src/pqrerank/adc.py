"""Exhaustive-scan ADC index and the (dist, id) ordered top-k selection."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .quant import ProductQuantizer, adc_distances, as_vector, as_vectors

# codes scanned per block; candidates are merged between blocks
SCAN_BLOCK = 1 << 20


@dataclass(frozen=True)
class SearchResult:
    """Ranked (id, squared distance) pairs, ascending by (dist, id)."""

    ids: np.ndarray
    dists: np.ndarray

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return zip(self.ids.tolist(), self.dists.tolist())

    @classmethod
    def empty(cls) -> SearchResult:
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float32))


def select_smallest(dists: np.ndarray, ids: np.ndarray, k: int) -> SearchResult:
    """The k smallest entries under the (dist, id) order, sorted.

    Uses a partition around the k-th distance so that only the entries tied
    with it need an id comparison.
    """
    n = len(dists)
    if k < n:
        kth = np.partition(dists, k - 1)[k - 1]
        below = np.flatnonzero(dists < kth)
        tied = np.flatnonzero(dists == kth)
        tied = tied[np.argsort(ids[tied], kind="stable")[:k - len(below)]]
        keep = np.concatenate([below, tied])
        dists, ids = dists[keep], ids[keep]
    order = np.lexsort((ids, dists))
    return SearchResult(ids[order].astype(np.int64), dists[order])


class TopK:
    """Bounded collector of the k best (dist, id) pairs over streamed blocks."""

    def __init__(self, k: int):
        self.k = k
        self._dists = np.empty(0, dtype=np.float32)
        self._ids = np.empty(0, dtype=np.int64)

    def push(self, dists: np.ndarray, ids: np.ndarray):
        if len(dists) == 0:
            return
        dists = np.concatenate([self._dists, dists])
        ids = np.concatenate([self._ids, ids])
        best = select_smallest(dists, ids, self.k)
        self._dists, self._ids = best.dists, best.ids

    def result(self) -> SearchResult:
        return select_smallest(self._dists, self._ids, self.k)


@dataclass
class AdcIndex:
    """First-stage codes for n vectors, m bytes each, ids 0..n-1.

    ``codes`` is kept column-major in memory for the scan; persistence
    writes it in id order. ``refine`` / ``refine_codes`` are set by
    :func:`pqrerank.refine.refine_encode` (ADC+R).
    """

    pq: ProductQuantizer
    codes: np.ndarray
    refine: ProductQuantizer | None = None
    refine_codes: np.ndarray | None = None

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.uint8)
        if codes.ndim != 2 or codes.shape[1] != self.pq.m:
            raise ValueError(f"codes must have shape (n, {self.pq.m})")
        self.codes = np.asfortranarray(codes)

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def d(self) -> int:
        return self.pq.d

    @property
    def bytes_per_vector(self) -> int:
        extra = self.refine_codes.shape[1] if self.refine_codes is not None else 0
        return self.pq.m + extra


def adc_build(pq: ProductQuantizer, base, threads: int = 1) -> AdcIndex:
    """Encode every base vector with ``pq``; ids are row positions."""
    base = as_vectors(base, pq.d, "base vectors")
    return AdcIndex(pq, encode_parallel(pq, base, threads))


def encode_parallel(pq: ProductQuantizer, vectors: np.ndarray, threads: int = 1,
                    block: int = 65536) -> np.ndarray:
    """Encode in row blocks, optionally on a thread pool; output placement
    is by row so the result does not depend on ``threads``."""
    codes = np.empty((vectors.shape[0], pq.m), dtype=np.uint8)
    starts = range(0, vectors.shape[0], block)

    def work(start):
        codes[start:start + block] = pq.encode_batch(vectors[start:start + block])

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, starts))
    else:
        for s in starts:
            work(s)
    return codes


def scan_codes(lut: np.ndarray, codes: np.ndarray, ids: np.ndarray | None, kprime: int,
               top: TopK | None = None) -> TopK:
    """Stream ``codes`` through the table in blocks, keeping the best kprime.

    ``ids`` defaults to row positions.
    """
    top = top or TopK(kprime)
    for start in range(0, codes.shape[0], SCAN_BLOCK):
        block = codes[start:start + SCAN_BLOCK]
        dist = adc_distances(lut, block)
        block_ids = (np.arange(start, start + len(block), dtype=np.int64)
                     if ids is None else ids[start:start + len(block)].astype(np.int64))
        top.push(dist, block_ids)
    return top


def adc_search(index: AdcIndex, x, kprime: int) -> SearchResult:
    """The kprime smallest asymmetric distance estimates over the whole index."""
    if kprime < 1:
        raise ValueError("kprime must be >= 1")
    lut = index.pq.build_lut(as_vector(x, index.d, "query"))
    return scan_codes(lut, index.codes, None, kprime).result()


def adc_search_batch(index: AdcIndex, queries, kprime: int, threads: int = 1) -> list[SearchResult]:
    queries = as_vectors(queries, index.d, "queries")
    return map_queries(lambda q: adc_search(index, q, kprime), queries, threads)


def map_queries(fn, queries: np.ndarray, threads: int = 1) -> list:
    """Apply ``fn`` to each query row, preserving order."""
    if threads > 1 and len(queries) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, queries))
    return [fn(q) for q in queries]
