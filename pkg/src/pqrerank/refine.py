"""Residual refinement codes and shortlist re-ranking (ADC+R).

A second product quantizer encodes the first-stage quantization error
``y - q_c(y)``. At query time the shortlist from the compressed-domain scan
is re-scored with the distance to ``q_c(y) + q_r(y - q_c(y))``.
"""

from __future__ import annotations

import numpy as np

from .adc import AdcIndex, SearchResult, adc_search, encode_parallel, select_smallest
from .quant import ProductQuantizer, TrainParams, as_vector, as_vectors, pq_train

# the refinement quantizer is an ordinary product quantizer over d-dim residuals
RefineQuantizer = ProductQuantizer


def residual(y, pq_c: ProductQuantizer) -> np.ndarray:
    """y minus its first-stage reconstruction, in float32."""
    y = as_vector(y, pq_c.d).astype(np.float32)
    return y - pq_c.decode(pq_c.encode(y))


def residuals(vectors, pq_c: ProductQuantizer, codes: np.ndarray | None = None) -> np.ndarray:
    vectors = as_vectors(vectors, pq_c.d)
    if codes is None:
        codes = pq_c.encode_batch(vectors)
    return vectors - pq_c.decode_batch(codes)


def refine_train(pq_c: ProductQuantizer, training, mprime: int, params: TrainParams | None = None,
                 ks: int = 256) -> RefineQuantizer:
    """Train the refinement quantizer on residuals of ``training`` under the
    final first-stage quantizer ``pq_c``."""
    training = as_vectors(training, pq_c.d, "training vectors")
    return pq_train(residuals(training, pq_c), mprime, ks, params)


def refine_encode(index: AdcIndex, rq: RefineQuantizer, base, threads: int = 1) -> np.ndarray:
    """Encode the residual of every indexed vector and attach the codes to
    ``index``. Returns the (n, m') code array."""
    base = as_vectors(base, index.d, "base vectors")
    if base.shape[0] != index.n:
        raise ValueError(f"count mismatch: base has {base.shape[0]} vectors, index has {index.n}")
    if rq.d != index.d:
        raise ValueError(f"dimension mismatch: refinement quantizer d={rq.d}, index d={index.d}")
    res = base - index.pq.decode_batch(index.codes)
    codes = encode_parallel(rq, res, threads)
    index.refine, index.refine_codes = rq, codes
    return codes


def reconstruct(pq_c: ProductQuantizer, rq: RefineQuantizer, code_c, code_r) -> np.ndarray:
    """Refined approximation: first-stage decode plus decoded residual."""
    return pq_c.decode(code_c) + rq.decode(code_r)


def rerank_candidates(x: np.ndarray, ids: np.ndarray, approx: np.ndarray, k: int) -> SearchResult:
    """Top k of ``ids`` by exact squared distance from ``x`` to ``approx``."""
    diff = approx.astype(np.float64) - x.astype(np.float64)
    dists = np.einsum("ij,ij->i", diff, diff)
    return select_smallest(dists, np.asarray(ids, dtype=np.int64), k)


def _check_shortlist(shortlist: SearchResult, k: int, n: int):
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(shortlist):
        raise ValueError(f"shortlist too small: {len(shortlist)} entries for k={k}")
    if len(shortlist) and (shortlist.ids.min() < 0 or shortlist.ids.max() >= n):
        raise ValueError("shortlist contains ids outside the index")


def rerank(index: AdcIndex, x, shortlist: SearchResult, k: int) -> SearchResult:
    """Re-score the shortlist with refined reconstructions and keep k.

    Distances are recomputed from scratch; output ids are a subset of the
    shortlist ids.
    """
    if index.refine is None or index.refine_codes is None:
        raise ValueError("index has no refinement codes; run refine_encode first")
    x = as_vector(x, index.d, "query")
    _check_shortlist(shortlist, k, index.n)
    ids = shortlist.ids
    approx = index.pq.decode_batch(index.codes[ids]) + index.refine.decode_batch(index.refine_codes[ids])
    return rerank_candidates(x, ids, approx, k)


def search_refined(index: AdcIndex, x, k: int, kprime: int | None = None) -> SearchResult:
    """ADC shortlist of kprime (default 2k) followed by re-ranking to k."""
    kprime = 2 * k if kprime is None else kprime
    shortlist = adc_search(index, x, kprime)
    if not len(shortlist):
        return shortlist
    return rerank(index, x, shortlist, min(k, len(shortlist)))
