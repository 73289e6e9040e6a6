"""Independent oracles used to freeze expected values in tests.

Each oracle deliberately avoids the code path it checks: softmax via
scalar ``math.exp``, k-means via exhaustive partition enumeration,
nearest-neighbor selection via a python sort, means via scalar loops.
"""

from __future__ import annotations

import math

import numpy as np


def softmax_oracle(logits):
    """Scalar stable softmax over one row."""
    mx = max(logits)
    exps = [math.exp(x - mx) for x in logits]
    total = sum(exps)
    return [e / total for e in exps]


def dense_fusion_oracle(fv, ftau, temperature):
    """Direct dense evaluation: scores row by row, then weighted sums."""
    fv = np.asarray(fv, dtype=np.float64)
    ftau = np.asarray(ftau, dtype=np.float64)
    n = fv.shape[0]
    agg = np.zeros((n, ftau.shape[1]))
    for i in range(n):
        logits = [float(fv[i] @ ftau[j]) / temperature for j in range(n)]
        weights = softmax_oracle(logits)
        for j in range(n):
            agg[i] += weights[j] * ftau[j]
    return np.concatenate([agg, fv], axis=1)


def brute_force_min_sse(points, k):
    """Exact optimal SSE over every assignment of points to k clusters."""
    pts = np.asarray(points, dtype=np.float64)
    m = pts.shape[0]
    assignments = np.indices((k,) * m).reshape(m, -1).T  # (k^m, m)
    masks = assignments[:, :, None] == np.arange(k)[None, None, :]
    counts = masks.sum(axis=1)
    sums = np.einsum("rmk,md->rkd", masks, pts)
    sq = (sums**2).sum(axis=2)
    contrib = np.divide(
        sq, counts, out=np.zeros_like(sq, dtype=np.float64), where=counts > 0
    )
    total_sq = float((pts**2).sum())
    return float((total_sq - contrib.sum(axis=1)).min())


def knn_oracle(center, members):
    """Sort (sample_id, vector) members by (squared distance, id)."""
    scored = []
    for sid, vec in members:
        acc = 0.0
        for a, b in zip(vec, center):
            acc += (float(a) - float(b)) ** 2
        scored.append((acc, sid))
    scored.sort()
    return [(sid, d) for d, sid in scored]


def mean_oracle(latents):
    """Element-wise mean via scalar loops over flattened tensors."""
    flats = [np.asarray(lat, dtype=np.float64).reshape(-1) for lat in latents]
    out = []
    for idx in range(flats[0].size):
        acc = 0.0
        for flat in flats:
            acc += float(flat[idx])
        out.append(acc / len(flats))
    return np.array(out).reshape(np.asarray(latents[0]).shape)
