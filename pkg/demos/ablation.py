"""
Source-only vs. single-style AdaIN vs. full SIDA
================================================

Trains one pretrained head per seed and adapts it to each of the four target
domains twice: once with plain AdaIN to one bank style (m=1, lambda=1, no
noise, no entropy weight) and once with the full recipe. Prints per-domain
mIoU averaged over seeds plus the wall-clock time of the adaptation runs.

    python demos/ablation.py            # 3 seeds, about 4 minutes on one core
    python demos/ablation.py 0 1        # pick seeds
"""
import sys
import time

import numpy as np

from sida.data_synth import DOMAINS
from sida.pipeline import run_ablation

seeds = tuple(int(s) for s in sys.argv[1:]) or (0, 1, 2)

t0 = time.perf_counter()
res = run_ablation(seeds=seeds, pretrain_iters=2000, adapt_iters=400)
total = time.perf_counter() - t0

names = ["source_only", "single_style", "sida"]
print(f"{'domain':<8}" + "".join(f"{n:>14}" for n in names))
for d in DOMAINS:
    row = [np.mean([res.scores[n][s][d] for s in seeds]) for n in names]
    print(f"{d:<8}" + "".join(f"{v:14.4f}" for v in row))
print(f"{'mean':<8}" + "".join(f"{res.mean(n):14.4f}" for n in names))

for n in names[1:]:
    print(f"{n}: adaptation wall-clock {res.seconds[n]:.1f}s")
print(f"total {total:.1f}s")
