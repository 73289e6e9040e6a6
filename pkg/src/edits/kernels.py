"""Hot numeric kernels: blocked softmax attention and k-means inner loops.

Two interchangeable backends:

* ``numba`` — ``@njit``-compiled loop kernels, the default whenever numba
  imports successfully.
* ``numpy`` — vectorized fallbacks, selected when numba is unavailable or
  when the ``EDITS_NUMBA`` environment variable is ``0``/``false``/``off``.

Both backends accumulate in float64 with a fixed per-row reduction order,
so each one is deterministic run-to-run. Cross-backend results agree to
~1e-12 but are not bit-identical (different summation orders).
``backend()`` reports the active path; the ``*_numpy`` and ``*_numba``
variants stay importable so ``benchmarks/bench_kernels.py`` can time both.

All kernels expect C-contiguous float64 arrays; callers cast once at the
boundary via :func:`as_f64`.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "HAS_NUMBA",
    "backend",
    "as_f64",
    "row_softmax",
    "attend_blocked",
    "assign_points",
    "update_centers",
    "pairwise_sq_dists",
]


def _numba_requested() -> bool:
    return os.environ.get("EDITS_NUMBA", "1").strip().lower() not in ("0", "false", "off")


try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised via EDITS_NUMBA=0 instead
    njit = None
    HAS_NUMBA = False

_USE_NUMBA = HAS_NUMBA and _numba_requested()


def backend() -> str:
    """Active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if _USE_NUMBA else "numpy"


def as_f64(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.float64)


# --------------------------------------------------------------------------
# numpy backend
# --------------------------------------------------------------------------


def row_softmax_numpy(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction."""
    x = np.asarray(logits, dtype=np.float64)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def attend_blocked_numpy(
    fv: np.ndarray, ftau: np.ndarray, inv_temp: float, block_size: int
) -> np.ndarray:
    """Softmax-weighted aggregation of ``ftau`` rows for every ``fv`` row.

    Processes query rows in blocks so peak extra memory is O(block * N);
    the full N x N score matrix is never materialized.
    """
    n = fv.shape[0]
    out = np.empty((n, ftau.shape[1]), dtype=np.float64)
    keys_t = ftau.T
    for start in range(0, n, block_size):
        stop = min(start + block_size, n)
        logits = (fv[start:stop] @ keys_t) * inv_temp
        out[start:stop] = row_softmax_numpy(logits) @ ftau
    return out


def assign_points_numpy(
    points: np.ndarray, centers: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-center assignment; ties go to the lowest center index."""
    m = points.shape[0]
    labels = np.empty(m, dtype=np.int64)
    dists = np.empty(m, dtype=np.float64)
    # Chunk the M x K x d difference tensor to bound memory.
    chunk = max(1, 4_000_000 // max(1, centers.size))
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        d2 = ((points[start:stop, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        lab = d2.argmin(axis=1)
        labels[start:stop] = lab
        dists[start:stop] = d2[np.arange(stop - start), lab]
    return labels, dists


def update_centers_numpy(
    points: np.ndarray, labels: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster means; empty clusters yield a zero row and count 0."""
    sums = np.zeros((k, points.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, points)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    centers = sums / np.maximum(counts, 1.0)[:, None]
    return centers, counts


def pairwise_sq_dists_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``a`` and ``b``."""
    na = a.shape[0]
    out = np.empty((na, b.shape[0]), dtype=np.float64)
    chunk = max(1, 4_000_000 // max(1, b.size))
    for start in range(0, na, chunk):
        stop = min(start + chunk, na)
        out[start:stop] = ((a[start:stop, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return out


# --------------------------------------------------------------------------
# numba backend (loop sources compiled lazily on first call)
# --------------------------------------------------------------------------


def _row_softmax_loops(logits):
    n, m = logits.shape
    out = np.empty((n, m), dtype=np.float64)
    for i in range(n):
        mx = logits[i, 0]
        for j in range(1, m):
            if logits[i, j] > mx:
                mx = logits[i, j]
        z = 0.0
        for j in range(m):
            w = np.exp(logits[i, j] - mx)
            out[i, j] = w
            z += w
        for j in range(m):
            out[i, j] /= z
    return out


def _attend_blocked_loops(fv, ftau, inv_temp, block_size):
    n, d = fv.shape
    m, dt = ftau.shape
    out = np.zeros((n, dt), dtype=np.float64)
    buf = np.empty(m, dtype=np.float64)
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(d):
                acc += fv[i, t] * ftau[j, t]
            buf[j] = acc * inv_temp
        mx = buf[0]
        for j in range(1, m):
            if buf[j] > mx:
                mx = buf[j]
        z = 0.0
        for j in range(m):
            w = np.exp(buf[j] - mx)
            buf[j] = w
            z += w
        for j in range(m):
            w = buf[j] / z
            for t in range(dt):
                out[i, t] += w * ftau[j, t]
    return out


def _assign_points_loops(points, centers):
    m, d = points.shape
    k = centers.shape[0]
    labels = np.empty(m, dtype=np.int64)
    dists = np.empty(m, dtype=np.float64)
    for i in range(m):
        best = np.inf
        best_j = 0
        for j in range(k):
            acc = 0.0
            for t in range(d):
                diff = points[i, t] - centers[j, t]
                acc += diff * diff
            if acc < best:
                best = acc
                best_j = j
        labels[i] = best_j
        dists[i] = best
    return labels, dists


def _update_centers_loops(points, labels, k):
    m, d = points.shape
    sums = np.zeros((k, d), dtype=np.float64)
    counts = np.zeros(k, dtype=np.float64)
    for i in range(m):
        j = labels[i]
        counts[j] += 1.0
        for t in range(d):
            sums[j, t] += points[i, t]
    centers = np.empty((k, d), dtype=np.float64)
    for j in range(k):
        c = counts[j] if counts[j] > 0.0 else 1.0
        for t in range(d):
            centers[j, t] = sums[j, t] / c
    return centers, counts


def _pairwise_sq_dists_loops(a, b):
    na, d = a.shape
    nb = b.shape[0]
    out = np.empty((na, nb), dtype=np.float64)
    for i in range(na):
        for j in range(nb):
            acc = 0.0
            for t in range(d):
                diff = a[i, t] - b[j, t]
                acc += diff * diff
            out[i, j] = acc
    return out


if HAS_NUMBA:
    row_softmax_numba = njit(cache=True)(_row_softmax_loops)
    attend_blocked_numba = njit(cache=True)(_attend_blocked_loops)
    assign_points_numba = njit(cache=True)(_assign_points_loops)
    update_centers_numba = njit(cache=True)(_update_centers_loops)
    pairwise_sq_dists_numba = njit(cache=True)(_pairwise_sq_dists_loops)

if _USE_NUMBA:
    row_softmax = row_softmax_numba
    attend_blocked = attend_blocked_numba
    assign_points = assign_points_numba
    update_centers = update_centers_numba
    pairwise_sq_dists = pairwise_sq_dists_numba
else:
    row_softmax = row_softmax_numpy
    attend_blocked = attend_blocked_numpy
    assign_points = assign_points_numpy
    update_centers = update_centers_numpy
    pairwise_sq_dists = pairwise_sq_dists_numpy


def warmup() -> None:
    """Trigger JIT compilation of every kernel on tiny inputs."""
    pts = np.array([[0.0, 1.0], [1.0, 0.0]])
    row_softmax(pts)
    attend_blocked(pts, pts, 1.0, 2)
    labels, _ = assign_points(pts, pts)
    update_centers(pts, labels, 2)
    pairwise_sq_dists(pts, pts)
