"""Pipeline configuration: one declarative JSON document.

Every CLI flag overrides exactly one config key; the effective config is
embedded in the run report for provenance. ``EDITS_CACHE_DIR`` in the
environment overrides ``cache_dir``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from edits.clients.base import ServiceEndpoint

__all__ = ["KMeansParams", "PipelineConfig", "STAGES"]

STAGES = ("caption", "embed", "fuse", "cluster", "lsa", "generate")


@dataclass(frozen=True)
class KMeansParams:
    max_iter: int = 300
    tol: float = 1e-6
    restarts: int = 10
    init: str = "kmeans++"

    def to_dict(self) -> dict:
        return {
            "max_iter": self.max_iter,
            "tol": self.tol,
            "restarts": self.restarts,
            "init": self.init,
        }


@dataclass(frozen=True)
class PipelineConfig:
    corpus_manifest: str = "corpus/manifest.jsonl"
    out_dir: str = "runs/out"
    ipc: int = 10
    temperature: float = 0.07
    awareness_capacity: int = 5
    seed: int = 0
    normalize_embeddings: bool = True
    block_size: int = 256
    kmeans: KMeansParams = field(default_factory=KMeansParams)
    noise_strength: float = 0.7
    num_steps: int = 50
    guidance_scale: float = 7.5
    scheduler_id: str = "ddim"
    images_per_prototype: int = 1
    per_class_softmax: bool = False
    stages: tuple[str, ...] = STAGES
    workers: int = 1
    mock: bool = True
    mock_embed_dim: int = 64
    mock_latent_shape: tuple[int, int, int] = (4, 32, 32)
    cache_dir: str | None = None
    class_names: tuple[str, ...] | None = None
    services: dict[str, ServiceEndpoint] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.ipc < 1:
            raise ValueError(f"ipc must be >= 1, got {self.ipc}")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.awareness_capacity < 1:
            raise ValueError(
                f"awareness_capacity must be >= 1, got {self.awareness_capacity}"
            )
        if not 0.0 <= self.noise_strength <= 1.0:
            raise ValueError(
                f"noise_strength must be in [0, 1], got {self.noise_strength}"
            )
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be >= 1, got {self.num_steps}")
        if self.images_per_prototype < 1:
            raise ValueError(
                f"images_per_prototype must be >= 1, got {self.images_per_prototype}"
            )
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise ValueError(f"unknown stages: {sorted(unknown)}")

    # -- paths ---------------------------------------------------------

    @property
    def out_path(self) -> Path:
        return Path(self.out_dir)

    @property
    def images_root(self) -> Path:
        return Path(self.corpus_manifest).parent

    def effective_cache_dir(self) -> Path:
        env = os.environ.get("EDITS_CACHE_DIR")
        if env:
            return Path(env)
        if self.cache_dir:
            return Path(self.cache_dir)
        return self.out_path / "cache"

    def class_name(self, class_id: int) -> str:
        if self.class_names is not None and class_id < len(self.class_names):
            return self.class_names[class_id]
        return f"class_{class_id}"

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "corpus_manifest": self.corpus_manifest,
            "out_dir": self.out_dir,
            "ipc": self.ipc,
            "temperature": self.temperature,
            "awareness_capacity": self.awareness_capacity,
            "seed": self.seed,
            "normalize_embeddings": self.normalize_embeddings,
            "block_size": self.block_size,
            "kmeans": self.kmeans.to_dict(),
            "noise_strength": self.noise_strength,
            "num_steps": self.num_steps,
            "guidance_scale": self.guidance_scale,
            "scheduler_id": self.scheduler_id,
            "images_per_prototype": self.images_per_prototype,
            "per_class_softmax": self.per_class_softmax,
            "stages": list(self.stages),
            "workers": self.workers,
            "mock": self.mock,
            "mock_embed_dim": self.mock_embed_dim,
            "mock_latent_shape": list(self.mock_latent_shape),
            "cache_dir": self.cache_dir,
            "class_names": list(self.class_names) if self.class_names else None,
            "services": {k: v.to_dict() for k, v in sorted(self.services.items())},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        obj = copy.deepcopy(obj)
        if "kmeans" in obj:
            obj["kmeans"] = KMeansParams(**obj["kmeans"])
        if "stages" in obj:
            obj["stages"] = tuple(obj["stages"])
        if "mock_latent_shape" in obj:
            obj["mock_latent_shape"] = tuple(obj["mock_latent_shape"])
        if obj.get("class_names") is not None:
            obj["class_names"] = tuple(obj["class_names"])
        if "services" in obj:
            obj["services"] = {
                k: ServiceEndpoint(**v) for k, v in obj["services"].items()
            }
        return cls(**obj)

    @classmethod
    def from_file(cls, path: os.PathLike | str) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def override(self, **kwargs) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def content_hash(self) -> str:
        """Hash of everything that shapes artifacts (worker count excluded)."""
        obj = self.to_dict()
        obj.pop("workers", None)
        blob = json.dumps(obj, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()
