"""In-memory corpus bundle: manifest records plus aligned embedding matrices.

Matrices are float32 (storage precision) with one row per record, in the
manifest's sample-id order. ``fv`` holds visual embeddings, ``ftau`` text
embeddings, ``h`` the fused features. All three are optional; stages fill
them in as they run. Records and matrices are treated as immutable once
constructed; mutating helpers return a new ``Corpus``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from edits.edb import read_embedding_block, write_embedding_block
from edits.manifest import SampleRecord, read_manifest, write_manifest

__all__ = ["Corpus", "EMBED_FILES"]

EMBED_FILES = {"fv": "fv.edb", "ftau": "ftau.edb", "h": "h.edb"}


@dataclass(frozen=True)
class Corpus:
    records: tuple[SampleRecord, ...]
    fv: np.ndarray | None = None
    ftau: np.ndarray | None = None
    h: np.ndarray | None = None

    def __post_init__(self) -> None:
        ids = [r.sample_id for r in self.records]
        if sorted(ids) != ids:
            raise ValueError("records must be sorted by sample_id")
        n = len(self.records)
        for name in ("fv", "ftau", "h"):
            mat = getattr(self, name)
            if mat is not None and mat.shape[0] != n:
                raise ValueError(
                    f"{name} holds {mat.shape[0]} rows for {n} records"
                )

    def __len__(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.class_id for r in self.records], dtype=np.int64)

    @property
    def sample_ids(self) -> np.ndarray:
        return np.array([r.sample_id for r in self.records], dtype=np.int64)

    def class_ids(self) -> list[int]:
        return sorted({r.class_id for r in self.records})

    def rows_of_class(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == class_id)

    def record_by_id(self, sample_id: int) -> SampleRecord:
        lo, hi = 0, len(self.records)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.records[mid].sample_id < sample_id:
                lo = mid + 1
            else:
                hi = mid
        if lo < len(self.records) and self.records[lo].sample_id == sample_id:
            return self.records[lo]
        raise KeyError(f"unknown sample_id {sample_id}")

    def row_by_id(self, sample_id: int) -> int:
        rec = self.record_by_id(sample_id)
        if rec.row is None:
            raise ValueError(f"sample {sample_id} has no embedding row assigned")
        return rec.row

    def with_embeddings(self, fv: np.ndarray, ftau: np.ndarray) -> "Corpus":
        return replace(
            self,
            fv=np.asarray(fv, dtype=np.float32),
            ftau=np.asarray(ftau, dtype=np.float32),
        )

    def with_fused(self, h: np.ndarray) -> "Corpus":
        return replace(self, h=np.asarray(h, dtype=np.float32))

    def save(self, out_dir: os.PathLike | str) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(self.records, out / "manifest.jsonl")
        emb = out / "embeddings"
        emb.mkdir(exist_ok=True)
        for name, fname in EMBED_FILES.items():
            mat = getattr(self, name)
            if mat is not None:
                write_embedding_block(mat, emb / fname)

    @classmethod
    def load(cls, out_dir: os.PathLike | str) -> "Corpus":
        out = Path(out_dir)
        records = read_manifest(out / "manifest.jsonl")
        mats: dict[str, np.ndarray | None] = {}
        for name, fname in EMBED_FILES.items():
            path = out / "embeddings" / fname
            mats[name] = read_embedding_block(path) if path.exists() else None
        # Align matrix rows to record order via the stored row offsets.
        order = None
        if any(m is not None for m in mats.values()):
            order = np.array([r.row for r in records], dtype=np.int64)
            if (order < 0).any():
                raise ValueError("manifest rows missing while embeddings exist")
        for name, mat in mats.items():
            if mat is not None and order is not None:
                mats[name] = mat[order]
        records = tuple(
            rec.with_row(i) if order is not None else rec
            for i, rec in enumerate(records)
        )
        return cls(records=records, **mats)
