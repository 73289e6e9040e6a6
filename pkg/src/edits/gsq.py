"""Global semantic fusion of visual and textual embeddings.

For a corpus of N image/caption pairs with visual embeddings ``F_v`` and
text embeddings ``F_tau`` in a shared d-dimensional space, every image
attends over *all* captions: score s_ij is the temperature-scaled softmax
of the dot product <f_v_i, f_tau_j> across j, and the fused feature is

    h_i = concat(sum_j s_ij * f_tau_j, f_v_i)

with the aggregated-text block first. Softmax rows use per-row max
subtraction and float64 denominators; the visual block passes through
bit-exactly. ``fused_features`` streams query rows in blocks so the
N x N score matrix is never materialized.

Embeddings are expected to be L2-normalized before entering these
functions when cosine-style scores are wanted (the pipeline normalizes at
its embed stage); the functions themselves never re-normalize.
"""

from __future__ import annotations

import numpy as np

from edits import kernels

__all__ = [
    "normalize_rows",
    "influence_matrix",
    "attend_text",
    "fuse",
    "fused_features",
    "assert_row_stochastic",
]

DEFAULT_BLOCK_SIZE = 256


def normalize_rows(matrix: np.ndarray, ids=None) -> np.ndarray:
    """Scale every row to unit Euclidean norm (float64 output).

    ``ids`` optionally names rows in the zero-row error message.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {x.shape}")
    norms = np.sqrt((x * x).sum(axis=1))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        ident = ids[zero[0]] if ids is not None else zero[0]
        raise ValueError(f"cannot normalize zero embedding row for sample {ident}")
    return x / norms[:, None]


def _check_pair(fv: np.ndarray, ftau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    fv = kernels.as_f64(fv)
    ftau = kernels.as_f64(ftau)
    if fv.ndim != 2 or ftau.ndim != 2:
        raise ValueError("embeddings must be 2-D matrices")
    if fv.shape[0] != ftau.shape[0]:
        raise ValueError(
            f"row-count mismatch: {fv.shape[0]} visual vs {ftau.shape[0]} text"
        )
    if fv.shape[1] != ftau.shape[1]:
        raise ValueError(
            "visual/text dimensions differ "
            f"({fv.shape[1]} vs {ftau.shape[1]}); the embedding service must "
            "declare one shared space"
        )
    return fv, ftau


def influence_matrix(
    fv: np.ndarray, ftau: np.ndarray, temperature: float
) -> np.ndarray:
    """Dense N x N caption-influence scores (row-stochastic)."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    fv, ftau = _check_pair(fv, ftau)
    logits = (fv @ ftau.T) * (1.0 / temperature)
    return kernels.row_softmax(kernels.as_f64(logits))


def attend_text(scores: np.ndarray, ftau: np.ndarray) -> np.ndarray:
    """Row-wise weighted sum of text embeddings, float64 accumulation."""
    s = kernels.as_f64(scores)
    f = kernels.as_f64(ftau)
    if s.ndim != 2 or s.shape[1] != f.shape[0]:
        raise ValueError(
            f"score matrix {s.shape} does not match {f.shape[0]} text rows"
        )
    assert_row_stochastic(s)
    return s @ f


def fuse(text_agg: np.ndarray, fv: np.ndarray) -> np.ndarray:
    """Concatenate aggregated text (first) with the visual block (bit-exact)."""
    t = np.asarray(text_agg)
    v = np.asarray(fv)
    if t.ndim != 2 or v.ndim != 2 or t.shape[0] != v.shape[0]:
        raise ValueError(f"row-count mismatch: {t.shape} vs {v.shape}")
    return np.concatenate([t, v], axis=1)


def fused_features(
    fv: np.ndarray,
    ftau: np.ndarray,
    temperature: float,
    block_size: int = DEFAULT_BLOCK_SIZE,
    class_labels: np.ndarray | None = None,
) -> np.ndarray:
    """Fused features for the whole corpus, streamed in row blocks.

    The softmax runs over all N captions. ``class_labels`` switches to a
    per-class softmax (attention restricted to same-class captions); that
    variant exists for ablation runs only and is not the default
    formulation.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    fv64, ftau64 = _check_pair(fv, ftau)
    inv_temp = 1.0 / temperature
    if class_labels is None:
        agg = kernels.attend_blocked(fv64, ftau64, inv_temp, block_size)
    else:
        labels = np.asarray(class_labels)
        if labels.shape[0] != fv64.shape[0]:
            raise ValueError("class_labels length does not match corpus size")
        agg = np.empty_like(ftau64)
        for class_id in np.unique(labels):
            idx = np.flatnonzero(labels == class_id)
            agg[idx] = kernels.attend_blocked(
                kernels.as_f64(fv64[idx]),
                kernels.as_f64(ftau64[idx]),
                inv_temp,
                block_size,
            )
    return fuse(agg, fv)


def assert_row_stochastic(scores: np.ndarray, tol: float = 1e-6) -> None:
    """Raise if any row of ``scores`` fails to sum to 1 within ``tol``."""
    sums = np.asarray(scores, dtype=np.float64).sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise ValueError(
            f"row {bad[0]} sums to {sums[bad[0]]!r}, expected 1 +- {tol}"
        )
