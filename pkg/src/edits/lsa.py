"""Local semantic awareness: evidence sets and dual prototypes.

For each cluster center, the awareness set is the capacity-bounded list
of that cluster's own members nearest to the center in fused space
(ascending squared distance, ties to the lower sample id); the implied
awareness radius is the distance of the last selected member. Members of
other clusters are never borrowed, even when the cluster is smaller than
the capacity.

From the awareness set come two prototypes: the image prototype is the
element-wise mean of the members' VAE latents, and the text prototype is
a service-side summary of exactly the members' captions (never the whole
class: summarizer input stays bounded and close to the image prototype's
evidence). When the summarizer is the offline mock, or a live summarizer
keeps failing after its retries, the text prototype falls back to the
medoid caption, flagged so live runs stay distinguishable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from edits import kernels
from edits.clients.base import ClientError
from edits.clients.services import Clients, EmbedClient, SummarizerClient
from edits.cluster import ClusterBuffer
from edits.corpus import Corpus

__all__ = [
    "AwarenessSet",
    "PrototypePair",
    "select_awareness_set",
    "image_prototype",
    "build_summarization_prompt",
    "medoid_caption",
    "text_prototype",
    "build_prototypes",
]

SUMMARY_HEADER = (
    "Please analyze the following {count} texts and generate a high-quality "
    "representative prototype text."
)
SECTION_INPUT_TEXTS = "## Input Texts:"
SECTION_OUTPUT_REQUIREMENTS = "## Output Requirements:"


@dataclass(frozen=True)
class AwarenessSet:
    """Capacity-bounded nearest members of one cluster center."""

    class_id: int
    center_index: int
    members: tuple[tuple[int, float], ...]  # (sample_id, squared distance) asc

    @property
    def sample_ids(self) -> tuple[int, ...]:
        return tuple(sid for sid, _ in self.members)

    @property
    def radius(self) -> float:
        return self.members[-1][1]


@dataclass(frozen=True)
class PrototypePair:
    class_id: int
    center_index: int
    image_prototype: np.ndarray  # float32 latent tensor
    text_prototype: str
    provenance: tuple[int, ...]
    summarizer_fallback: bool = False


def select_awareness_set(
    buffer: ClusterBuffer, center_index: int, capacity: int
) -> AwarenessSet:
    """The ``capacity`` members of cluster ``center_index`` nearest its center."""
    if capacity < 1:
        raise ValueError(f"capacity must be >= 1, got {capacity}")
    members = buffer.members_of(center_index)
    return AwarenessSet(
        class_id=buffer.class_id,
        center_index=center_index,
        members=members[:capacity],
    )


def image_prototype(latents: Sequence[np.ndarray]) -> np.ndarray:
    """Element-wise mean latent, accumulated in float64, emitted as float32."""
    if len(latents) == 0:
        raise ValueError("cannot average an empty latent list")
    first = np.asarray(latents[0])
    acc = np.zeros(first.shape, dtype=np.float64)
    for lat in latents:
        arr = np.asarray(lat)
        if arr.shape != first.shape:
            raise ValueError(
                f"latent shape mismatch: {arr.shape} vs {first.shape}"
            )
        acc += arr.astype(np.float64)
    return (acc / len(latents)).astype(np.float32)


def _escape_sections(text: str) -> str:
    # Keeps caption-borne "##" from masquerading as a section header.
    return text.replace("##", r"\#\#")


def build_summarization_prompt(captions: Sequence[str], class_label: str) -> str:
    """Instantiate the summarizer template over the awareness captions.

    The count is substituted literally (one caption yields "1 texts").
    """
    if not captions:
        raise ValueError("at least one caption required")
    lines = [SUMMARY_HEADER.format(count=len(captions)), "", SECTION_INPUT_TEXTS]
    for i, caption in enumerate(captions, 1):
        lines.append(f"{i}. {_escape_sections(caption)}")
    lines += [
        "",
        SECTION_OUTPUT_REQUIREMENTS,
        f"1. Extract semantic content directly related to label {class_label} "
        "in each text.",
        "2. Merge unique information and expressions from each text.",
        "3. Fluent language, accurate information and clear structure.",
    ]
    return "\n".join(lines)


def medoid_caption(captions: Sequence[str], embeddings: np.ndarray) -> int:
    """Index of the caption minimizing summed Euclidean distance to the rest."""
    if len(captions) != embeddings.shape[0]:
        raise ValueError("caption/embedding count mismatch")
    d2 = kernels.pairwise_sq_dists(
        kernels.as_f64(embeddings), kernels.as_f64(embeddings)
    )
    sums = np.sqrt(d2).sum(axis=1)
    return int(sums.argmin())


def text_prototype(
    captions: Sequence[str],
    class_label: str,
    summarizer: SummarizerClient,
    embedder: EmbedClient,
) -> tuple[str, bool]:
    """Summarize the awareness captions; returns (text, used_fallback).

    The fallback is the medoid caption under the embedder's metric. It is
    used when the summarizer is the offline mock and when a live
    summarizer still fails after its bounded retries.
    """
    if not captions:
        raise ValueError("at least one caption required")
    if all(not c for c in captions):
        raise ValueError("all captions empty")
    if not summarizer.is_mock:
        prompt = build_summarization_prompt(captions, class_label)
        try:
            summary = summarizer.summarize(prompt)
            if summary:
                return summary, False
        except ClientError:
            pass
    if len(captions) == 1:
        return captions[0], True
    idx = medoid_caption(captions, embedder.embed_texts(captions))
    return captions[idx], True


def build_prototypes(
    buffers: Sequence[ClusterBuffer],
    corpus: Corpus,
    clients: Clients,
    capacity: int,
    images_root: os.PathLike | str,
    class_names: Sequence[str],
) -> list[PrototypePair]:
    """One dual prototype per (class, center), ordered deterministically."""
    root = Path(images_root)
    pairs: list[PrototypePair] = []
    for buffer in sorted(buffers, key=lambda b: b.class_id):
        label = class_names[buffer.class_id]
        for center_index in range(buffer.k):
            awareness = select_awareness_set(buffer, center_index, capacity)
            records = [corpus.record_by_id(sid) for sid in awareness.sample_ids]
            latents = [clients.vae.encode(root / rec.image_ref) for rec in records]
            captions = [rec.caption or "" for rec in records]
            text, fallback = text_prototype(
                captions, label, clients.summarize, clients.embed
            )
            pairs.append(
                PrototypePair(
                    class_id=buffer.class_id,
                    center_index=center_index,
                    image_prototype=image_prototype(latents),
                    text_prototype=text,
                    provenance=awareness.sample_ids,
                    summarizer_fallback=fallback,
                )
            )
    return pairs
