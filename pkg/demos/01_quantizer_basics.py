"""
Product quantizer basics
========================

Train a product quantizer, encode a few vectors, decode them back, and
compare the asymmetric (lookup table) distance to the true distance.
"""

import numpy as np

from pqrerank import TrainParams, generate_synthetic, pq_train
from pqrerank.quant import adc_distance

# a small seeded set: 20k training vectors, d=32
data = generate_synthetic(21_000, 32, clusters=16, seed=0)
train, held_out = data[:20_000], data[20_000:]

# m=4 sub-quantizers of 256 centroids each -> 4 bytes per vector
pq = pq_train(train, m=4, ks=256, params=TrainParams(iterations=15, seed=0))
print("sub-quantizers:", pq.m, "centroids each:", pq.ks, "sub-dimension:", pq.dsub)
print("training MSE per vector:", round(pq.mse, 3))

codes = pq.encode_batch(held_out)
recon = pq.decode_batch(codes)
print("first code:", codes[0].tolist())
print("held-out reconstruction MSE:", round(float(((held_out - recon) ** 2).sum(1).mean()), 3))

# one table of m x ks squared sub-distances per query; a distance is then m lookups
x = held_out[0]
lut = pq.build_lut(x)
print("lookup table shape:", lut.shape)
for i in range(1, 6):
    est = adc_distance(lut, codes[i])
    true = float(((x - held_out[i]) ** 2).sum())
    print(f"  vector {i}: estimated {est:8.2f}   true {true:8.2f}")
