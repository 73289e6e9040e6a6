"""Per-class k-means over fused features: the prior clustered buffer.

Lloyd's algorithm with k-means++ seeding from the deterministic Philox
streams, multiple restarts, squared-Euclidean distances, and a
farthest-point reseed for empty clusters. Nearest-center ties break to
the lowest center index; with a fixed seed and input order the result is
bit-identical across runs.

A :class:`ClusterBuffer` holds one class's centers, the sample-id to
center assignment, the total SSE, and per-center member lists sorted
ascending by (squared distance, sample id). Buffers persist as one JSONL
file per class (centers kept at full float64 precision in JSON) plus a
float32 ``.edb`` block of the centers.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from edits import kernels
from edits.corpus import Corpus
from edits.edb import write_embedding_block
from edits.rng import derive_seed, make_rng

__all__ = [
    "KMeansResult",
    "kmeans",
    "reseed_empty_cluster",
    "ClusterBuffer",
    "build_buffer",
    "save_buffer",
    "load_buffer",
    "load_buffers",
]


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray
    labels: np.ndarray
    dists: np.ndarray  # squared distance of each point to its center
    sse: float
    n_iter: int
    sse_history: tuple[float, ...]  # winning restart, one entry per assignment
    restart_histories: tuple[tuple[float, ...], ...]


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    m = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    idx = int(rng.integers(m))
    centers[0] = points[idx]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(m, p=d2 / total))
        else:
            idx = int(rng.integers(m))
        centers[j] = points[idx]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def reseed_empty_cluster(
    points: np.ndarray,
    centers: np.ndarray,
    labels: np.ndarray,
    sq_dists: np.ndarray,
) -> np.ndarray:
    """Move each empty cluster's center onto a farthest point.

    Empty centers (lowest index first) are relocated to the points with
    maximal squared distance to their currently assigned center, one
    point per empty center. Returns the same array object when no
    cluster is empty.
    """
    k = centers.shape[0]
    counts = np.bincount(labels, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return centers
    new_centers = centers.copy()
    # Stable sort keeps the lowest point index among equal distances.
    order = np.argsort(-sq_dists, kind="stable")
    for rank, center_idx in enumerate(empty):
        new_centers[center_idx] = points[order[rank % len(order)]]
    return new_centers


def _kmeans_once(
    points: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int,
    tol: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, int, tuple[float, ...]]:
    centers = _plusplus_init(points, k, rng)
    history: list[float] = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, d2 = kernels.assign_points(points, centers)
        for _ in range(k + 1):
            reseeded = reseed_empty_cluster(points, centers, labels, d2)
            if reseeded is centers:
                break
            centers = reseeded
            labels, d2 = kernels.assign_points(points, centers)
        history.append(float(d2.sum()))
        new_centers, counts = kernels.update_centers(points, labels, k)
        still_empty = counts == 0
        if still_empty.any():
            new_centers[still_empty] = centers[still_empty]
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    labels, d2 = kernels.assign_points(points, centers)
    sse = float(d2.sum())
    history.append(sse)
    return centers, labels, d2, sse, n_iter, tuple(history)


def kmeans(
    points: np.ndarray,
    k: int,
    *,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    restarts: int = 10,
) -> KMeansResult:
    """Best-of-``restarts`` Lloyd's k-means; deterministic for a fixed seed."""
    pts = kernels.as_f64(points)
    if pts.ndim != 2:
        raise ValueError(f"expected a 2-D point matrix, got shape {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError("points contain non-finite entries")
    m = pts.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if m < k:
        raise ValueError(f"cannot place {k} centers on {m} points")
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")

    best: tuple | None = None
    histories: list[tuple[float, ...]] = []
    for restart in range(restarts):
        rng = make_rng(seed, "kmeans", restart)
        centers, labels, d2, sse, n_iter, history = _kmeans_once(
            pts, k, rng, max_iter, tol
        )
        histories.append(history)
        if best is None or sse < best[3]:
            best = (centers, labels, d2, sse, n_iter, history)
    centers, labels, d2, sse, n_iter, history = best
    return KMeansResult(
        centers=centers,
        labels=labels,
        dists=d2,
        sse=sse,
        n_iter=n_iter,
        sse_history=history,
        restart_histories=tuple(histories),
    )


@dataclass(frozen=True)
class ClusterBuffer:
    """One class's clustered prior: centers plus sorted member lists."""

    class_id: int
    centers: np.ndarray  # (K, d) float64
    assignment: dict[int, int]  # sample_id -> center index
    sse: float
    center_members: tuple[tuple[tuple[int, float], ...], ...]
    clamped: bool = False

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    def members_of(self, center_index: int) -> tuple[tuple[int, float], ...]:
        if not 0 <= center_index < self.k:
            raise IndexError(
                f"center index {center_index} outside [0, {self.k}) "
                f"for class {self.class_id}"
            )
        return self.center_members[center_index]


def build_buffer(
    corpus: Corpus,
    ipc: int,
    seed: int,
    *,
    max_iter: int = 300,
    tol: float = 1e-6,
    restarts: int = 10,
    features: np.ndarray | None = None,
) -> list[ClusterBuffer]:
    """Cluster each class independently into min(ipc, population) centers.

    ``features`` defaults to the corpus's fused matrix; passing ``fv``
    switches to visual-only clustering for ablation runs.
    """
    if ipc < 1:
        raise ValueError(f"ipc must be >= 1, got {ipc}")
    feats = features if features is not None else corpus.h
    if feats is None:
        raise ValueError("corpus has no fused features; run the fuse stage first")
    feats64 = kernels.as_f64(feats)
    sample_ids = corpus.sample_ids
    labels = corpus.labels
    buffers: list[ClusterBuffer] = []
    for class_id in corpus.class_ids():
        idx = np.flatnonzero(labels == class_id)
        if idx.size == 0:
            raise ValueError(f"class {class_id} has no members")
        k = min(ipc, int(idx.size))
        result = kmeans(
            feats64[idx],
            k,
            seed=derive_seed(seed, "cluster", class_id),
            max_iter=max_iter,
            tol=tol,
            restarts=restarts,
        )
        ids = sample_ids[idx]
        assignment = {int(sid): int(lab) for sid, lab in zip(ids, result.labels)}
        members: list[tuple[tuple[int, float], ...]] = []
        for center_idx in range(k):
            mask = result.labels == center_idx
            pairs = sorted(
                zip(result.dists[mask], ids[mask]), key=lambda p: (p[0], p[1])
            )
            members.append(tuple((int(sid), float(d)) for d, sid in pairs))
        buffers.append(
            ClusterBuffer(
                class_id=class_id,
                centers=result.centers,
                assignment=assignment,
                sse=result.sse,
                center_members=tuple(members),
                clamped=k < ipc,
            )
        )
    return buffers


def save_buffer(buffer: ClusterBuffer, directory: os.PathLike | str) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"class_{buffer.class_id}.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        meta = {
            "class_id": buffer.class_id,
            "k": buffer.k,
            "sse": buffer.sse,
            "clamped": buffer.clamped,
        }
        fh.write(json.dumps(meta) + "\n")
        for center_idx in range(buffer.k):
            line = {
                "center_index": center_idx,
                "center": [float(x) for x in buffer.centers[center_idx]],
                "members": [
                    [sid, dist] for sid, dist in buffer.center_members[center_idx]
                ],
            }
            fh.write(json.dumps(line) + "\n")
    write_embedding_block(
        buffer.centers.astype(np.float32),
        out / f"class_{buffer.class_id}_centers.edb",
    )
    return path


def load_buffer(path: os.PathLike | str) -> ClusterBuffer:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    meta, center_lines = lines[0], lines[1:]
    centers = np.array([line["center"] for line in center_lines], dtype=np.float64)
    members = tuple(
        tuple((int(sid), float(d)) for sid, d in line["members"])
        for line in center_lines
    )
    assignment = {
        sid: line["center_index"]
        for line in center_lines
        for sid, _ in line["members"]
    }
    return ClusterBuffer(
        class_id=int(meta["class_id"]),
        centers=centers,
        assignment=assignment,
        sse=float(meta["sse"]),
        center_members=members,
        clamped=bool(meta["clamped"]),
    )


def load_buffers(directory: os.PathLike | str) -> list[ClusterBuffer]:
    paths = sorted(
        Path(directory).glob("class_*.jsonl"),
        key=lambda p: int(p.stem.split("_")[1]),
    )
    return [load_buffer(p) for p in paths]
