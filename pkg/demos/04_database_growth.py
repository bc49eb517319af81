"""
Recall as the database grows
============================

Quantizers are trained once; the base set grows through nested prefixes.
Prints recall@10 for ADC and ADC+R at each size.
"""

import logging

from pqrerank.experiments import database_growth, synthetic_dataset

logging.basicConfig(level=logging.INFO, format="%(message)s")

ds = synthetic_dataset(200_000, nq=200, nlearn=20_000, d=64, seed=3, gt_k=None)
rows = database_growth(ds, sizes=(2_000, 20_000, 200_000), m=8, mprime=16)

print(f"{'n':>8}  {'ADC':>6}  {'ADC+R':>6}")
for n, adc, refined in rows:
    print(f"{n:8d}  {adc:6.3f}  {refined:6.3f}")
