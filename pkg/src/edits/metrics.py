"""Embedding-space quality metrics for prototype sets.

Desk-scale surrogates for classifier-based evaluation:

* dispersion ratio — mean pairwise Euclidean distance between prototypes
  of different classes divided by the mean distance between prototypes of
  the same class, both in the space the prototypes were clustered in.
  Higher means better inter-class separation. Reported as ``None`` when
  undefined (fewer than two classes, or no same-class pairs).
* nearest-prototype purity — fraction of corpus samples whose nearest
  prototype (squared Euclidean; ties broken by ascending class id then
  center index) shares their class. In [0, 1].
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from edits import kernels

__all__ = ["prototype_metrics"]


def prototype_metrics(
    features: np.ndarray,
    labels: np.ndarray,
    prototypes: Sequence[tuple[int, int, np.ndarray]],
) -> dict:
    """Metrics for ``prototypes`` given the corpus ``features``/``labels``.

    ``prototypes`` holds (class_id, center_index, vector) triples; vectors
    must live in the same space as ``features``.
    """
    if not prototypes:
        raise ValueError("no prototypes given")
    ordered = sorted(prototypes, key=lambda p: (p[0], p[1]))
    proto_classes = np.array([p[0] for p in ordered], dtype=np.int64)
    proto_mat = kernels.as_f64(np.stack([np.asarray(p[2]) for p in ordered]))
    feats = kernels.as_f64(features)
    labels = np.asarray(labels, dtype=np.int64)
    if feats.shape[1] != proto_mat.shape[1]:
        raise ValueError(
            f"feature dim {feats.shape[1]} does not match prototype dim "
            f"{proto_mat.shape[1]}"
        )

    d2 = kernels.pairwise_sq_dists(feats, proto_mat)
    # argmin returns the first minimum; ordered prototypes make that the
    # lowest (class_id, center_index) on exact ties.
    nearest = d2.argmin(axis=1)
    purity = float((proto_classes[nearest] == labels).mean())

    dispersion: float | None = None
    if np.unique(proto_classes).size >= 2:
        pd = np.sqrt(kernels.pairwise_sq_dists(proto_mat, proto_mat))
        iu, ju = np.triu_indices(len(ordered), k=1)
        same = proto_classes[iu] == proto_classes[ju]
        if same.any():
            intra = float(pd[iu[same], ju[same]].mean())
            inter = float(pd[iu[~same], ju[~same]].mean())
            if intra > 0.0:
                dispersion = inter / intra

    return {"dispersion_ratio": dispersion, "purity": purity}
