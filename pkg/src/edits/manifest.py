"""Corpus manifest: one flat JSON object per line, sorted by sample id.

Each line carries the scalar fields of one sample (id, class, image
reference, caption, embedding-block row offset). Embedding vectors live
in ``.edb`` blocks next to the manifest; ``row`` indexes into them.
Round-trips are lossless, including absent captions and non-ASCII text.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

__all__ = [
    "SampleRecord",
    "ManifestError",
    "DuplicateSampleIdError",
    "UnknownClassError",
    "write_manifest",
    "read_manifest",
]


class ManifestError(Exception):
    pass


class DuplicateSampleIdError(ManifestError):
    pass


class UnknownClassError(ManifestError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    """One corpus item; embeddings are matrix rows addressed by ``row``."""

    sample_id: int
    class_id: int
    image_ref: str
    caption: str | None = None
    row: int | None = None

    def with_caption(self, caption: str) -> "SampleRecord":
        return replace(self, caption=caption)

    def with_row(self, row: int) -> "SampleRecord":
        return replace(self, row=row)

    def to_line(self) -> str:
        obj: dict[str, object] = {
            "sample_id": self.sample_id,
            "class_id": self.class_id,
            "image_ref": self.image_ref,
        }
        if self.caption is not None:
            obj["caption"] = self.caption
        if self.row is not None:
            obj["row"] = self.row
        return json.dumps(obj, ensure_ascii=False)

    @classmethod
    def from_line(cls, line: str) -> "SampleRecord":
        obj = json.loads(line)
        return cls(
            sample_id=int(obj["sample_id"]),
            class_id=int(obj["class_id"]),
            image_ref=str(obj["image_ref"]),
            caption=obj.get("caption"),
            row=obj.get("row"),
        )


def _check_records(
    records: Sequence[SampleRecord], num_classes: int | None
) -> list[SampleRecord]:
    ordered = sorted(records, key=lambda r: r.sample_id)
    seen: set[int] = set()
    for rec in ordered:
        if rec.sample_id in seen:
            raise DuplicateSampleIdError(f"duplicate sample_id {rec.sample_id}")
        seen.add(rec.sample_id)
        if rec.class_id < 0:
            raise UnknownClassError(
                f"sample {rec.sample_id}: negative class_id {rec.class_id}"
            )
        if num_classes is not None and rec.class_id >= num_classes:
            raise UnknownClassError(
                f"sample {rec.sample_id}: class_id {rec.class_id} "
                f"outside [0, {num_classes})"
            )
    return ordered


def write_manifest(
    records: Iterable[SampleRecord],
    path: os.PathLike | str,
    num_classes: int | None = None,
) -> int:
    """Write records sorted by sample id; returns the record count."""
    ordered = _check_records(list(records), num_classes)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in ordered:
            fh.write(rec.to_line())
            fh.write("\n")
    return len(ordered)


def read_manifest(
    path: os.PathLike | str, num_classes: int | None = None
) -> list[SampleRecord]:
    records: list[SampleRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SampleRecord.from_line(line))
    return _check_records(records, num_classes)
