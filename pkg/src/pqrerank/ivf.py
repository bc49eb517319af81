"""IVFADC: coarse quantizer + inverted lists of residual PQ codes.

Each base vector goes to the list of its nearest coarse centroid and is
stored as a PQ code of ``y - centroid``. A query scans the v lists whose
centroids are nearest, with one lookup table per probed list. IVFADC+R adds
refinement codes over the full first-stage error
``y - centroid - pq_decode(code)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .adc import SearchResult, TopK, encode_parallel, scan_codes
from .quant import (Codebook, ProductQuantizer, TrainParams, as_vector, as_vectors,
                    kmeans_train, nearest_centroid, pq_train)
from .refine import _check_shortlist, rerank_candidates

ID_BYTES = 4


@dataclass(frozen=True)
class IvfSearchParams:
    v: int
    kprime: int

    def validate(self, c: int):
        if not 1 <= self.v <= c:
            raise ValueError(f"v must be in [1, {c}], got {self.v}")
        if self.kprime < 1:
            raise ValueError("kprime must be >= 1")


@dataclass
class IvfIndex:
    """Inverted lists stored back to back.

    List l occupies rows ``offsets[l]:offsets[l+1]`` of ``ids`` (uint32) and
    ``codes`` (column-major uint8). ``refine_codes`` is id-aligned.
    """

    coarse: Codebook
    pq: ProductQuantizer
    ids: np.ndarray
    codes: np.ndarray
    offsets: np.ndarray
    refine: ProductQuantizer | None = None
    refine_codes: np.ndarray | None = None

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.uint32)
        self.codes = np.asfortranarray(np.asarray(self.codes, dtype=np.uint8))
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        n = len(self.ids)
        if self.codes.shape != (n, self.pq.m):
            raise ValueError("codes and ids disagree")
        if len(self.offsets) != self.c + 1 or self.offsets[0] != 0 or self.offsets[-1] != n:
            raise ValueError("list offsets do not cover the entries")
        if np.any(np.diff(self.offsets) < 0):
            raise ValueError("list offsets must be non-decreasing")
        # position of each id in the list storage, and its list number
        self._pos = np.empty(n, dtype=np.int64)
        self._pos[self.ids.astype(np.int64)] = np.arange(n)
        self._labels = np.repeat(np.arange(self.c), np.diff(self.offsets))[self._pos]

    @property
    def c(self) -> int:
        return self.coarse.k

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def d(self) -> int:
        return self.pq.d

    @property
    def list_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def list_ids(self, l: int) -> np.ndarray:
        return self.ids[self.offsets[l]:self.offsets[l + 1]]

    def list_codes(self, l: int) -> np.ndarray:
        return self.codes[self.offsets[l]:self.offsets[l + 1]]

    def labels(self, ids=None) -> np.ndarray:
        """Coarse list number of each id."""
        return self._labels if ids is None else self._labels[ids]

    def codes_of(self, ids) -> np.ndarray:
        return self.codes[self._pos[ids]]

    @property
    def bytes_per_vector(self) -> int:
        extra = self.refine_codes.shape[1] if self.refine_codes is not None else 0
        return self.pq.m + ID_BYTES + extra

    def approximate(self, ids) -> np.ndarray:
        """First-stage reconstruction: coarse centroid plus decoded residual."""
        ids = np.asarray(ids, dtype=np.int64)
        return self.coarse.centroids[self._labels[ids]] + self.pq.decode_batch(self.codes_of(ids))


def ivf_train(training, c: int, m: int, ks: int = 256,
              params: TrainParams | None = None) -> tuple[Codebook, ProductQuantizer]:
    """Coarse k-means on raw vectors, then a product quantizer on the
    residuals to the assigned coarse centroid. The product quantizer uses
    ``params.seed + 1``."""
    params = params or TrainParams()
    x = as_vectors(training, name="training vectors")
    if x.shape[0] < c:
        raise ValueError(f"insufficient training data: {x.shape[0]} vectors for c={c}")
    coarse = kmeans_train(x, c, params)
    labels, _ = coarse.assign(x)
    pq = pq_train(x - coarse.centroids[labels], m, ks, replace(params, seed=params.seed + 1))
    return coarse, pq


def ivf_build(coarse: Codebook, pq: ProductQuantizer, base, threads: int = 1) -> IvfIndex:
    if coarse.dim != pq.d:
        raise ValueError(f"dimension mismatch: coarse d={coarse.dim}, pq d={pq.d}")
    base = as_vectors(base, pq.d, "base vectors")
    labels, _ = coarse.assign(base)
    order = np.argsort(labels, kind="stable")
    res = base[order] - coarse.centroids[labels[order]]
    codes = encode_parallel(pq, res, threads)
    offsets = np.zeros(coarse.k + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(np.bincount(labels, minlength=coarse.k))
    return IvfIndex(coarse, pq, order.astype(np.uint32), codes, offsets)


def probe_lists(index: IvfIndex, x, v: int) -> np.ndarray:
    """The v lists whose coarse centroids are nearest to x, nearest first
    (lowest list number on ties)."""
    x = as_vector(x, index.d, "query").astype(np.float64)
    diff = index.coarse.centroids - x
    dist = np.einsum("ij,ij->i", diff, diff)
    return np.lexsort((np.arange(index.c), dist))[:v]


def ivf_search(index: IvfIndex, x, params: IvfSearchParams) -> SearchResult:
    params.validate(index.c)
    x = as_vector(x, index.d, "query").astype(np.float64)
    top = TopK(params.kprime)
    for l in probe_lists(index, x, params.v):
        lo, hi = index.offsets[l], index.offsets[l + 1]
        if lo == hi:
            continue
        lut = index.pq.build_lut(x - index.coarse.centroids[l])
        scan_codes(lut, index.codes[lo:hi], index.ids[lo:hi], params.kprime, top)
    return top.result()


def ivf_refine_train(coarse: Codebook, pq: ProductQuantizer, training, mprime: int,
                     params: TrainParams | None = None, ks: int = 256) -> ProductQuantizer:
    """Refinement quantizer trained on full first-stage residuals."""
    x = as_vectors(training, pq.d, "training vectors")
    labels, _ = coarse.assign(x)
    res = x - coarse.centroids[labels]
    res = res - pq.decode_batch(pq.encode_batch(res))
    return pq_train(res, mprime, ks, params)


def ivf_refine_encode(index: IvfIndex, rq: ProductQuantizer, base, threads: int = 1) -> np.ndarray:
    base = as_vectors(base, index.d, "base vectors")
    if base.shape[0] != index.n:
        raise ValueError(f"count mismatch: base has {base.shape[0]} vectors, index has {index.n}")
    if rq.d != index.d:
        raise ValueError(f"dimension mismatch: refinement quantizer d={rq.d}, index d={index.d}")
    res = base - index.approximate(np.arange(index.n))
    codes = encode_parallel(rq, res, threads)
    index.refine, index.refine_codes = rq, codes
    return codes


def ivf_reconstruct(index: IvfIndex, ids) -> np.ndarray:
    """Three-term refined reconstruction for the given ids."""
    if index.refine is None:
        raise ValueError("index has no refinement codes; run ivf_refine_encode first")
    ids = np.asarray(ids, dtype=np.int64)
    return index.approximate(ids) + index.refine.decode_batch(index.refine_codes[ids])


def ivf_rerank(index: IvfIndex, x, shortlist: SearchResult, k: int) -> SearchResult:
    if index.refine is None or index.refine_codes is None:
        raise ValueError("index has no refinement codes; run ivf_refine_encode first")
    x = as_vector(x, index.d, "query")
    _check_shortlist(shortlist, k, index.n)
    return rerank_candidates(x, shortlist.ids, ivf_reconstruct(index, shortlist.ids), k)


def ivf_search_refined(index: IvfIndex, x, k: int, v: int, kprime: int | None = None) -> SearchResult:
    kprime = 2 * k if kprime is None else kprime
    shortlist = ivf_search(index, x, IvfSearchParams(v, kprime))
    if not len(shortlist):
        return shortlist
    return ivf_rerank(index, x, shortlist, min(k, len(shortlist)))
