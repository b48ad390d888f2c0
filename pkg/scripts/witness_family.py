"""Bump family on a long half-line: 2^8 functions psi_P at mutual sup-distance 1,
each with a flat sublinear Higson constant."""
import itertools
import time

import numpy as np

from corona_lab.functions import bump_family, classify, psi_P
from corona_lab.spaces import build_halfline

t0 = time.perf_counter()
X = build_halfline(2 ** 14)
fam = bump_family(X, 8)
print("anchors:", X.norms[fam.anchors].tolist())
scales = [2.0 ** k for k in range(2, 13)]
vals = []
labels = {}
worst_slope = 0.0
for sel in itertools.product([0, 1], repeat=8):
    f = psi_P(sel, fam)
    vals.append(f.values.real)
    rep = classify(f, scales)
    labels[rep.classification] = labels.get(rep.classification, 0) + 1
    worst_slope = max(worst_slope, rep.slope)
V = np.array(vals)
dist = np.array([np.abs(V[i] - V).max(axis=1) for i in range(len(V))])
off = dist[~np.eye(len(V), dtype=bool)]
print("classifications:", labels)
print(f"pairwise sup distance: min {off.min()}, max {off.max()}")
print(f"steepest slope {worst_slope:.4f}; {time.perf_counter() - t0:.1f}s")
