"""Desk-scale drivers for the benchmark experiments.

Each driver trains what it needs on the learning set, builds indexes in
memory, and returns :class:`BenchReport` rows (or recall curves). The
learning set is split in halves: the first trains the first-stage (and
coarse) quantizers, the second the refinement quantizers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .adc import adc_build
from .evaluation import GroundTruth, compute_groundtruth, recall_curve, run_experiment, timed_search
from .io import generate_synthetic
from .ivf import ivf_build, ivf_refine_encode, ivf_refine_train, ivf_train
from .quant import TrainParams, pq_train
from .refine import refine_encode, refine_train

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    base: np.ndarray
    queries: np.ndarray
    learn: np.ndarray
    gt: GroundTruth | None = None

    def halves(self) -> tuple[np.ndarray, np.ndarray]:
        h = len(self.learn) // 2
        return self.learn[:h], self.learn[h:]

    def prefix(self, n: int, gt_k: int = 100) -> Dataset:
        """Same queries and learning set over the first n base vectors."""
        base = self.base[:n]
        return Dataset(base, self.queries, self.learn, compute_groundtruth(base, self.queries, gt_k))


def synthetic_dataset(n: int, nq: int = 1000, nlearn: int = 50000, d: int = 128,
                      clusters: int = 1024, seed: int = 0, gt_k: int | None = 100) -> Dataset:
    """Learning, query and base sets drawn from one seeded mixture."""
    data = generate_synthetic(nlearn + nq + n, d, clusters, seed)
    ds = Dataset(data[nlearn + nq:], data[nlearn:nlearn + nq], data[:nlearn])
    if gt_k:
        ds.gt = compute_groundtruth(ds.base, ds.queries, gt_k)
    return ds


def _params(params):
    return params or TrainParams()


def adc_rows(ds: Dataset, m: int = 8, mprimes=(8, 16, 32), k: int = 100, kprime: int | None = None,
             ks: int = 256, params: TrainParams | None = None, n_queries: int = 1000):
    """ADC row plus one ADC+R row per m'."""
    params = _params(params)
    first, second = ds.halves()
    pq = pq_train(first, m, ks, params)
    index = adc_build(pq, ds.base)
    rows = [run_experiment(index, ds.queries, ds.gt, "ADC", k, kprime, n_queries=n_queries)]
    for mp in mprimes:
        rq = refine_train(pq, second, mp, params, ks)
        refine_encode(index, rq, ds.base)
        rows.append(run_experiment(index, ds.queries, ds.gt, "ADC+R", k, kprime, n_queries=n_queries))
        log.info("ADC+R m'=%d done", mp)
    return rows


def ivf_rows(ds: Dataset, c: int = 256, v: int = 8, m: int = 8, mprimes=(8, 16, 32), k: int = 100,
             kprime: int | None = None, ks: int = 256, params: TrainParams | None = None,
             n_queries: int = 1000):
    """IVFADC row plus one IVFADC+R row per m'."""
    params = _params(params)
    first, second = ds.halves()
    coarse, pq = ivf_train(first, c, m, ks, params)
    index = ivf_build(coarse, pq, ds.base)
    rows = [run_experiment(index, ds.queries, ds.gt, "IVFADC", k, kprime, v, n_queries)]
    for mp in mprimes:
        rq = ivf_refine_train(coarse, pq, second, mp, params, ks)
        ivf_refine_encode(index, rq, ds.base)
        rows.append(run_experiment(index, ds.queries, ds.gt, "IVFADC+R", k, kprime, v, n_queries))
    return rows


def table1(ds: Dataset, m: int = 8, mprimes=(8, 16, 32), c: int = 256, v: int = 8, k: int = 100,
           kprime: int | None = None, params: TrainParams | None = None, n_queries: int = 1000):
    """Re-ranking gain at fixed m, for both the exhaustive and IVF variants."""
    return (adc_rows(ds, m, mprimes, k, kprime, params=params, n_queries=n_queries)
            + ivf_rows(ds, c, v, m, mprimes, k, kprime, params=params, n_queries=n_queries))


def table2(ds: Dataset, budgets=(8, 16, 32), k: int = 100, kprime: int | None = None,
           params: TrainParams | None = None, n_queries: int = 1000):
    """For each bytes/vector budget b: ADC with m=b versus ADC+R with
    m=m'=b/2."""
    rows = []
    for b in budgets:
        rows += adc_rows(ds, b, (), k, kprime, params=params, n_queries=n_queries)
        rows += adc_rows(ds, b // 2, (b // 2,), k, kprime, params=params, n_queries=n_queries)[1:]
    return rows


def recall_curves(ds: Dataset, m: int = 8, mprimes=(8, 16, 32), k: int = 100, kprime: int | None = None,
                  ranks=(1, 2, 5, 10, 20, 50, 100), params: TrainParams | None = None,
                  n_queries: int = 1000) -> dict[str, list[tuple[int, float]]]:
    """recall@r curves for ADC and ADC+R at each m'."""
    params = _params(params)
    first, second = ds.halves()
    nq = min(n_queries, len(ds.queries))
    queries, gt = ds.queries[:nq], ds.gt.head(nq)
    pq = pq_train(first, m, 256, params)
    index = adc_build(pq, ds.base)
    res, _ = timed_search(index, queries, "ADC", k)
    curves = {"ADC": recall_curve(res, gt, ranks)}
    for mp in mprimes:
        refine_encode(index, refine_train(pq, second, mp, params), ds.base)
        res, _ = timed_search(index, queries, "ADC+R", k, kprime)
        curves[f"ADC+R m'={mp}"] = recall_curve(res, gt, ranks)
    return curves


def database_growth(ds: Dataset, sizes=(10_000, 100_000, 1_000_000), m: int = 8, mprime: int = 16,
                    k: int = 100, kprime: int | None = None, r: int = 10,
                    params: TrainParams | None = None, n_queries: int = 1000, pq=None, rq=None):
    """recall@r of ADC and ADC+R as the base grows through prefixes of
    ``ds.base``. Quantizers are trained once (or passed in). Returns rows of
    (n, recall ADC, recall ADC+R)."""
    params = _params(params)
    first, second = ds.halves()
    if pq is None:
        pq = pq_train(first, m, 256, params)
    if rq is None:
        rq = refine_train(pq, second, mprime, params)
    nq = min(n_queries, len(ds.queries))
    out = []
    for n in sizes:
        sub = ds.prefix(n) if n != len(ds.base) or ds.gt is None else ds
        index = adc_build(pq, sub.base)
        refine_encode(index, rq, sub.base)
        gt = sub.gt.head(nq)
        adc, _ = timed_search(index, sub.queries[:nq], "ADC", k)
        ref, _ = timed_search(index, sub.queries[:nq], "ADC+R", k, kprime)
        out.append((n, dict(recall_curve(adc, gt, [r]))[r], dict(recall_curve(ref, gt, [r]))[r]))
        log.info("growth n=%d done", n)
    return out
