"""
Re-ranking a shortlist with refinement codes
============================================

ADC returns a shortlist of k' candidates. Each database vector also stores
a few bytes encoding its first-stage residual, so the shortlist can be
re-ordered by distances to the finer reconstruction.
"""

import numpy as np

from pqrerank import (TrainParams, adc_build, compute_groundtruth, generate_synthetic, pq_train,
                      recall_curve, refine_encode, refine_train, timed_search)

params = TrainParams(iterations=15, seed=0)
data = generate_synthetic(20_000 + 200 + 50_000, 64, clusters=32, seed=1)
learn, queries, base = data[:20_000], data[20_000:20_200], data[20_200:]

# first half of the learning set for q_c, second half for the residual quantizer
pq = pq_train(learn[:10_000], m=8, params=params)
index = adc_build(pq, base)
gt = compute_groundtruth(base, queries, 1)

res, t = timed_search(index, queries, "ADC", k=100)
print(f"ADC     m=8        {index.bytes_per_vector:2d} bytes/vector  {1000 * t:.2f} ms/query")
print("   ", recall_curve(res, gt, (1, 10, 100)))

for mprime in (8, 16):
    rq = refine_train(pq, learn[10_000:], mprime, params)
    refine_encode(index, rq, base)
    res, t = timed_search(index, queries, "ADC+R", k=100, kprime=200)
    print(f"ADC+R   m=8 m'={mprime:<3d} {index.bytes_per_vector:2d} bytes/vector  {1000 * t:.2f} ms/query")
    print("   ", recall_curve(res, gt, (1, 10, 100)))

# reconstruction error drops once the residual codes are added
first = pq.decode_batch(index.codes)
refined = first + index.refine.decode_batch(index.refine_codes)
print("mean squared error, first stage:", round(float(((base - first) ** 2).sum(1).mean()), 2))
print("mean squared error, refined:    ", round(float(((base - refined) ** 2).sum(1).mean()), 2))
