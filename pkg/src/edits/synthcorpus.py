"""Synthetic corpora for demos, tests, and metric oracles.

``write_toy_corpus`` emits a small captionless corpus of opaque image
blobs, ready for a full mock run. ``write_confounded_corpus`` emits a
corpus with hand-constructed embeddings whose geometry makes the benefit
of caption fusion provable rather than empirical; its docstring carries
the argument and doubles as the oracle for purity-gap assertions.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from edits.edb import write_embedding_block
from edits.manifest import SampleRecord, write_manifest
from edits.rng import make_rng

__all__ = ["write_toy_corpus", "write_confounded_corpus", "CONFOUNDED_GEOMETRY"]


def write_toy_corpus(
    directory: os.PathLike | str,
    classes: int = 3,
    per_class: int = 60,
    seed: int = 0,
) -> list[str]:
    """Corpus of seeded opaque image blobs; captions/embeddings left to stages.

    Returns the class-name list. Layout: ``<dir>/manifest.jsonl`` plus
    ``<dir>/images/<sid>.img``.
    """
    root = Path(directory)
    (root / "images").mkdir(parents=True, exist_ok=True)
    records = []
    for class_id in range(classes):
        for i in range(per_class):
            sid = class_id * per_class + i
            ref = f"images/{sid:05d}.img"
            blob = make_rng(seed, "image", sid).bytes(64)
            (root / ref).write_bytes(blob)
            records.append(
                SampleRecord(sample_id=sid, class_id=class_id, image_ref=ref)
            )
    write_manifest(records, root / "manifest.jsonl", num_classes=classes)
    return [f"class_{c}" for c in range(classes)]


# Geometry constants for the confounded corpus; see the docstring below.
CONFOUNDED_GEOMETRY = {
    "bg_coef": 0.5,  # background direction weight in visual embeddings
    "id_visual": 0.8,  # per-sample identity weight in visual embeddings
    "id_text": 0.8,  # per-sample identity weight in text embeddings
    "class_text": 0.9,  # class direction weight in text embeddings
    "temperature": 0.07,
    "dominant_per_bg": 24,  # samples per dominant background per class
    "strays_per_class": 12,  # off-background samples per class
}


def write_confounded_corpus(
    out_dir: os.PathLike | str,
    classes: int = 3,
    per_class: int = 60,
    seed: int = 0,
) -> dict:
    """Corpus where captions carry the class signal and visuals are
    background-confounded; the purity gap between fused and visual-only
    clustering is guaranteed by construction.

    Construction (all directions are distinct canonical basis vectors, so
    every inner product below is exact):

    * 2·C background directions ``u_b``; class ``c``'s dominant
      backgrounds are ``2c`` and ``2c+1`` (24 samples each), and its 12
      remaining "stray" samples use the other classes' dominant
      backgrounds (3 per foreign background).
    * C class directions ``z_c`` and one identity direction ``e_i`` per
      sample, orthogonal to everything else.
    * visual embedding  ``f_v_i  = 0.5 u_{b_i} + 0.8 e_i``  — no class
      component at all.
    * text embedding    ``f_tau_i = 0.9 z_{y_i} + 0.8 e_i``.

    Why the gap is forced, with ipc=2, capacity-style per-class k-means,
    temperature 0.07, and normalization off:

    * Fusion: the only nonzero visual-text inner product is the
      self-match ``<f_v_i, f_tau_i> = 0.64``, so each row's attention
      puts weight ``exp(0.64/0.07) ~ 9.4e3`` on its own caption versus 1
      on each of the other N-1: the aggregated text block is ~0.98 of
      ``0.9 z_{y_i} + 0.8 e_i``. Every fused center of class ``c``
      therefore carries ~0.89 ``z_c``, while centers of other classes
      carry ~0.89 ``z_{c'}``: a same-class center is nearer by ~1.58 in
      squared distance from the text block alone, versus at most 0.5
      recoverable from a background match. Fused purity is 1.0.
    * Visual-only: per-sample identity terms contribute the same SSE to
      every partition (they are mutually orthogonal), so k-means splits
      each class by its two dominant backgrounds. A stray of class ``c``
      on background ``b`` sits ~0.4 (squared) from both of its own class
      centers but only ~0.01 from the center of the class dominated by
      ``b``; all 12·C strays are claimed by foreign centers, capping
      visual purity at 144/180 = 0.8.

    The guaranteed gap is therefore ~0.2, with wide slack over the 0.1
    assertion bound. Writes a run-directory layout (manifest plus
    ``embeddings/{fv,ftau}.edb`` and image blobs) so a pipeline can start
    at the fuse stage; returns the expected purity bounds.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    geom = CONFOUNDED_GEOMETRY
    n = classes * per_class
    num_bg = 2 * classes
    dim = num_bg + classes + n
    dominant = geom["dominant_per_bg"]
    if per_class != 2 * dominant + geom["strays_per_class"]:
        raise ValueError(
            "per_class must equal 2*dominant_per_bg + strays_per_class"
        )

    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "embeddings").mkdir(parents=True, exist_ok=True)

    fv = np.zeros((n, dim), dtype=np.float64)
    ftau = np.zeros((n, dim), dtype=np.float64)
    records = []
    class_names = [f"class_{c}" for c in range(classes)]
    for class_id in range(classes):
        foreign_bgs = [b for b in range(num_bg) if b // 2 != class_id]
        for i in range(per_class):
            sid = class_id * per_class + i
            if i < dominant:
                bg = 2 * class_id
            elif i < 2 * dominant:
                bg = 2 * class_id + 1
            else:
                bg = foreign_bgs[(i - 2 * dominant) % len(foreign_bgs)]
            bg_axis = bg
            class_axis = num_bg + class_id
            id_axis = num_bg + classes + sid
            fv[sid, bg_axis] = geom["bg_coef"]
            fv[sid, id_axis] = geom["id_visual"]
            ftau[sid, class_axis] = geom["class_text"]
            ftau[sid, id_axis] = geom["id_text"]
            ref = f"images/{sid:05d}.img"
            (root / ref).write_bytes(make_rng(seed, "image", sid).bytes(32))
            records.append(
                SampleRecord(
                    sample_id=sid,
                    class_id=class_id,
                    image_ref=ref,
                    caption=f"a {class_names[class_id]} against backdrop {bg}",
                    row=sid,
                )
            )
    write_manifest(records, root / "manifest.jsonl", num_classes=classes)
    write_embedding_block(fv.astype(np.float32), root / "embeddings" / "fv.edb")
    write_embedding_block(ftau.astype(np.float32), root / "embeddings" / "ftau.edb")
    return {
        "classes": classes,
        "per_class": per_class,
        "class_names": class_names,
        "temperature": geom["temperature"],
        "expected_full_purity": 1.0,
        "expected_visual_purity": (per_class - geom["strays_per_class"])
        * classes
        / n,
    }
