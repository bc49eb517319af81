"""
Inverted lists with a coarse quantizer
======================================

A coarse k-means assigns every database vector to one of c lists; the
product quantizer encodes the residual to the list centroid. A query only
scans the v lists nearest to it.
"""

import numpy as np

from pqrerank import (IvfSearchParams, TrainParams, compute_groundtruth, generate_synthetic, ivf_build,
                      ivf_refine_encode, ivf_refine_train, ivf_search, ivf_train, recall_at_r)
from pqrerank.ivf import probe_lists
from pqrerank.evaluation import timed_search

params = TrainParams(iterations=15, seed=0)
data = generate_synthetic(20_000 + 200 + 100_000, 64, clusters=32, seed=2)
learn, queries, base = data[:20_000], data[20_000:20_200], data[20_200:]

coarse, pq = ivf_train(learn[:10_000], c=64, m=8, params=params)
index = ivf_build(coarse, pq, base)
print("lists:", index.c, " largest:", index.list_sizes.max(), " smallest:", index.list_sizes.min())
print("bytes per vector (codes + id):", index.bytes_per_vector)

gt = compute_groundtruth(base, queries, 1)

# more probes -> more candidates scanned -> better recall, slower queries
for v in (1, 4, 16, 64):
    res, t = timed_search(index, queries, "IVFADC", k=100, v=v)
    scanned = np.mean([index.list_sizes[probe_lists(index, x, v)].sum() for x in queries]) / index.n
    print(f"v={v:3d}  ~{100 * scanned:5.1f}% scanned  R@10={recall_at_r(res, gt, 10):.3f}  {1000 * t:.2f} ms")

rq = ivf_refine_train(coarse, pq, learn[10_000:], 8, params)
ivf_refine_encode(index, rq, base)
res, t = timed_search(index, queries, "IVFADC+R", k=100, kprime=200, v=4)
print(f"IVFADC+R v=4  R@10={recall_at_r(res, gt, 10):.3f}  {1000 * t:.2f} ms  {index.bytes_per_vector} bytes/vector")

x = queries[0]
print("query 0, top 5:", list(ivf_search(index, x, IvfSearchParams(4, 5))))
