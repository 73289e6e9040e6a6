"""Resumable stage orchestrator and evaluation reports.

Stages run in a fixed order (caption, embed, fuse, cluster, lsa,
generate), each reading its inputs from disk and writing artifacts plus a
completion marker under ``<out>/stages/``. A rerun skips stages whose
marker matches the current config hash and whose outputs still exist —
unless forced, and once any stage executes every later stage re-executes.
A failed stage halts the run with the stage name and cause; partial
artifacts stay on disk for inspection and are replaced when the stage
next runs.

Run layout::

    <out>/manifest.jsonl            captioned corpus manifest
    <out>/embeddings/{fv,ftau,h}.edb
    <out>/buffers/class_<id>.jsonl  + class_<id>_centers.edb
    <out>/prototypes/latents.edb    + manifest.jsonl
    <out>/synthetic/<class>/<k>.png
    <out>/report.json
    <out>/stages/<stage>.json       completion markers

The report is rebuilt on every run and is fully determined by (corpus,
config, seed) under mock clients; wall-clock data lives under its
``timings`` key only.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from edits import gsq, kernels
from edits.clients.base import ContentCache, ServiceHandshake
from edits.clients.noise import add_noise, alphabar_schedule
from edits.clients.services import Clients, GenerationRequest
from edits.cluster import ClusterBuffer, build_buffer, load_buffers, save_buffer
from edits.config import STAGES, PipelineConfig
from edits.corpus import Corpus
from edits.edb import read_embedding_block, write_embedding_block
from edits.lsa import PrototypePair, build_prototypes
from edits.manifest import read_manifest, write_manifest
from edits.metrics import prototype_metrics
from edits.rng import derive_seed

__all__ = ["StageError", "Pipeline", "run", "ablate", "compute_run_metrics"]

logger = logging.getLogger(__name__)

ABLATION_AXES = frozenset({"gsq", "lsa", "dpg"})


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _parallel_map(items: Sequence, fn: Callable, workers: int) -> list:
    """Apply ``fn`` to items, results in input order regardless of timing."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    results = [None] * len(items)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, item): i for i, item in enumerate(items)}
        for fut in as_completed(futures):
            results[futures[fut]] = fut.result()
    return results


def make_clients(config: PipelineConfig) -> Clients:
    cache = ContentCache(config.effective_cache_dir())
    if config.mock:
        handshake = ServiceHandshake(
            embed_dim=config.mock_embed_dim,
            latent_shape=config.mock_latent_shape,
            total_steps=config.num_steps,
        )
        return Clients.mock(config.seed, handshake, cache)
    return Clients.live(config.services, cache)


class Pipeline:
    def __init__(self, config: PipelineConfig, clients: Clients | None = None):
        self.config = config
        self.out = config.out_path
        self.clients = clients if clients is not None else make_clients(config)

    # -- paths -----------------------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.out / "manifest.jsonl"

    @property
    def embeddings_dir(self) -> Path:
        return self.out / "embeddings"

    @property
    def buffers_dir(self) -> Path:
        return self.out / "buffers"

    @property
    def prototypes_dir(self) -> Path:
        return self.out / "prototypes"

    @property
    def synthetic_dir(self) -> Path:
        return self.out / "synthetic"

    def _marker_path(self, stage: str) -> Path:
        return self.out / "stages" / f"{stage}.json"

    def _stage_outputs(self, stage: str) -> list[Path]:
        return {
            "caption": [self.manifest_path],
            "embed": [self.embeddings_dir / "fv.edb", self.embeddings_dir / "ftau.edb"],
            "fuse": [self.embeddings_dir / "h.edb"],
            "cluster": [self.buffers_dir],
            "lsa": [
                self.prototypes_dir / "manifest.jsonl",
                self.prototypes_dir / "latents.edb",
            ],
            "generate": [self.synthetic_dir],
        }[stage]

    def _stage_done(self, stage: str, config_hash: str) -> bool:
        marker = self._marker_path(stage)
        if not marker.exists():
            return False
        try:
            with open(marker, "r", encoding="utf-8") as fh:
                meta = json.load(fh)
        except (OSError, ValueError):
            return False
        if meta.get("config_hash") != config_hash:
            return False
        for path in self._stage_outputs(stage):
            if not path.exists():
                return False
            if path.is_dir() and not any(path.iterdir()):
                return False
        return True

    def _write_marker(self, stage: str, config_hash: str) -> None:
        marker = self._marker_path(stage)
        marker.parent.mkdir(parents=True, exist_ok=True)
        with open(marker, "w", encoding="utf-8") as fh:
            json.dump({"stage": stage, "config_hash": config_hash}, fh)

    # -- orchestration ----------------------------------------------------

    def run(self, force: bool = False, upto: str | None = None) -> dict:
        cfg = self.config
        if upto is not None and upto not in STAGES:
            raise ValueError(f"unknown stage {upto!r}; expected one of {STAGES}")
        stages = [s for s in STAGES if s in cfg.stages]
        if upto is not None:
            stages = [s for s in stages if STAGES.index(s) <= STAGES.index(upto)]
        self.out.mkdir(parents=True, exist_ok=True)
        config_hash = cfg.content_hash()
        timings: dict[str, dict] = {}
        executed_any = False
        for stage in stages:
            if not force and not executed_any and self._stage_done(stage, config_hash):
                logger.info("stage %s: up to date, skipped", stage)
                timings[stage] = {"seconds": None, "executed": False}
                continue
            logger.info("stage %s: running", stage)
            start = time.perf_counter()
            try:
                getattr(self, f"_stage_{stage}")()
            except Exception as exc:
                raise StageError(stage, exc) from exc
            self._write_marker(stage, config_hash)
            timings[stage] = {
                "seconds": time.perf_counter() - start,
                "executed": True,
            }
            executed_any = True
        report = self.build_report(timings)
        with open(self.out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
        return report

    # -- stages -----------------------------------------------------------

    def _class_names(self, class_ids: Iterable[int]) -> list[str]:
        top = max(class_ids)
        return [self.config.class_name(c) for c in range(top + 1)]

    def _stage_caption(self) -> None:
        cfg = self.config
        num_classes = len(cfg.class_names) if cfg.class_names else None
        records = read_manifest(cfg.corpus_manifest, num_classes)
        root = cfg.images_root

        def work(rec):
            return self.clients.caption.caption(
                root / rec.image_ref, cfg.class_name(rec.class_id)
            )

        missing = [rec for rec in records if rec.caption is None]
        captions = _parallel_map(missing, work, cfg.workers)
        filled = {rec.sample_id: cap for rec, cap in zip(missing, captions)}
        out_records = []
        for i, rec in enumerate(sorted(records, key=lambda r: r.sample_id)):
            if rec.sample_id in filled:
                rec = rec.with_caption(filled[rec.sample_id])
            out_records.append(rec.with_row(i))
        write_manifest(out_records, self.manifest_path, num_classes)

    def _stage_embed(self) -> None:
        cfg = self.config
        records = read_manifest(self.manifest_path)
        without = [r.sample_id for r in records if r.caption is None]
        if without:
            raise ValueError(f"samples without captions: {without[:5]}")
        root = cfg.images_root
        texts = [rec.caption for rec in records]
        paths = [root / rec.image_ref for rec in records]
        ftau = np.stack(
            _parallel_map(texts, self.clients.embed.embed_text, cfg.workers)
        )
        fv = np.stack(
            _parallel_map(paths, self.clients.embed.embed_image, cfg.workers)
        )
        if cfg.normalize_embeddings:
            ids = [rec.sample_id for rec in records]
            fv = gsq.normalize_rows(fv, ids).astype(np.float32)
            ftau = gsq.normalize_rows(ftau, ids).astype(np.float32)
        self.embeddings_dir.mkdir(parents=True, exist_ok=True)
        write_embedding_block(fv, self.embeddings_dir / "fv.edb")
        write_embedding_block(ftau, self.embeddings_dir / "ftau.edb")

    def _stage_fuse(self) -> None:
        cfg = self.config
        corpus = Corpus.load(self.out)
        if corpus.fv is None or corpus.ftau is None:
            raise ValueError("embeddings missing; run the embed stage first")
        labels = corpus.labels if cfg.per_class_softmax else None
        h = gsq.fused_features(
            corpus.fv, corpus.ftau, cfg.temperature, cfg.block_size, labels
        )
        write_embedding_block(
            h.astype(np.float32), self.embeddings_dir / "h.edb"
        )

    def _stage_cluster(self) -> None:
        cfg = self.config
        corpus = Corpus.load(self.out)
        buffers = build_buffer(
            corpus,
            cfg.ipc,
            cfg.seed,
            max_iter=cfg.kmeans.max_iter,
            tol=cfg.kmeans.tol,
            restarts=cfg.kmeans.restarts,
        )
        shutil.rmtree(self.buffers_dir, ignore_errors=True)
        for buffer in buffers:
            save_buffer(buffer, self.buffers_dir)
            if buffer.clamped:
                logger.warning(
                    "class %d has fewer members than ipc=%d; clamped to k=%d",
                    buffer.class_id,
                    cfg.ipc,
                    buffer.k,
                )

    def _stage_lsa(self) -> None:
        cfg = self.config
        corpus = Corpus.load(self.out)
        buffers = load_buffers(self.buffers_dir)
        pairs = build_prototypes(
            buffers,
            corpus,
            self.clients,
            cfg.awareness_capacity,
            cfg.images_root,
            self._class_names(corpus.class_ids()),
        )
        shutil.rmtree(self.prototypes_dir, ignore_errors=True)
        self.prototypes_dir.mkdir(parents=True)
        flat = np.stack([p.image_prototype.reshape(-1) for p in pairs])
        write_embedding_block(flat, self.prototypes_dir / "latents.edb")
        shape = pairs[0].image_prototype.shape
        with open(
            self.prototypes_dir / "manifest.jsonl", "w", encoding="utf-8"
        ) as fh:
            for i, pair in enumerate(pairs):
                line = {
                    "class_id": pair.class_id,
                    "center_index": pair.center_index,
                    "row": i,
                    "latent_shape": "x".join(str(s) for s in shape),
                    "text_prototype": pair.text_prototype,
                    "provenance": list(pair.provenance),
                    "summarizer_fallback": pair.summarizer_fallback,
                }
                fh.write(json.dumps(line, ensure_ascii=False) + "\n")

    def load_prototypes(self) -> list[PrototypePair]:
        flat = read_embedding_block(self.prototypes_dir / "latents.edb")
        pairs: list[PrototypePair] = []
        with open(
            self.prototypes_dir / "manifest.jsonl", "r", encoding="utf-8"
        ) as fh:
            for line in fh:
                if not line.strip():
                    continue
                obj = json.loads(line)
                shape = tuple(int(s) for s in obj["latent_shape"].split("x"))
                pairs.append(
                    PrototypePair(
                        class_id=int(obj["class_id"]),
                        center_index=int(obj["center_index"]),
                        image_prototype=flat[int(obj["row"])].reshape(shape),
                        text_prototype=str(obj["text_prototype"]),
                        provenance=tuple(int(s) for s in obj["provenance"]),
                        summarizer_fallback=bool(obj["summarizer_fallback"]),
                    )
                )
        return pairs

    def _stage_generate(self) -> None:
        cfg = self.config
        pairs = self.load_prototypes()
        handshake = self.clients.generate.handshake()
        schedule = alphabar_schedule(cfg.num_steps, handshake.alphabar_final)
        shutil.rmtree(self.synthetic_dir, ignore_errors=True)

        def work(job):
            pair, copy_idx = job
            seed = derive_seed(
                cfg.seed, "generate", pair.class_id, pair.center_index, copy_idx
            )
            noised, _ = add_noise(
                pair.image_prototype,
                cfg.noise_strength,
                cfg.num_steps,
                seed,
                alphabar=schedule,
            )
            request = GenerationRequest(
                init_latent=noised,
                prompt=pair.text_prototype,
                num_steps=cfg.num_steps,
                guidance_scale=cfg.guidance_scale,
                scheduler_id=cfg.scheduler_id,
                seed=seed,
            )
            image, _ = self.clients.generate.generate(request)
            return image

        jobs = [
            (pair, j) for pair in pairs for j in range(cfg.images_per_prototype)
        ]
        images = _parallel_map(jobs, work, cfg.workers)
        for (pair, copy_idx), image in zip(jobs, images):
            class_dir = self.synthetic_dir / cfg.class_name(pair.class_id)
            class_dir.mkdir(parents=True, exist_ok=True)
            name = (
                f"{pair.center_index}.png"
                if copy_idx == 0
                else f"{pair.center_index}_{copy_idx}.png"
            )
            (class_dir / name).write_bytes(image)

    # -- report -----------------------------------------------------------

    def build_report(self, timings: dict[str, dict]) -> dict:
        cfg = self.config
        report: dict = {
            "config": cfg.to_dict(),
            "config_hash": cfg.content_hash(),
            "seed": cfg.seed,
            "kernel_backend": kernels.backend(),
            "generation_defaults": {
                "temperature": cfg.temperature,
                "noise_strength": cfg.noise_strength,
                "num_steps": cfg.num_steps,
                "guidance_scale": cfg.guidance_scale,
                "scheduler_id": cfg.scheduler_id,
            },
            "timings": timings,
        }
        if self.manifest_path.exists():
            records = read_manifest(self.manifest_path)
            report["counts"] = {
                "samples": len(records),
                "classes": len({r.class_id for r in records}),
            }
        if self.buffers_dir.exists():
            buffers = load_buffers(self.buffers_dir)
            report["clusters"] = {
                str(b.class_id): {
                    "k": b.k,
                    "sse": b.sse,
                    "clamped": b.clamped,
                }
                for b in buffers
            }
            report["warnings"] = [
                f"class {b.class_id} clamped to k={b.k} (ipc={cfg.ipc})"
                for b in buffers
                if b.clamped
            ]
            h_path = self.embeddings_dir / "h.edb"
            if h_path.exists():
                corpus = Corpus.load(self.out)
                protos = [
                    (b.class_id, k, b.centers[k])
                    for b in buffers
                    for k in range(b.k)
                ]
                report["prototype_metrics"] = prototype_metrics(
                    corpus.h, corpus.labels, protos
                )
        proto_manifest = self.prototypes_dir / "manifest.jsonl"
        if proto_manifest.exists():
            pairs = self.load_prototypes()
            report.setdefault("counts", {})["prototype_pairs"] = len(pairs)
            report["fallbacks"] = {
                "summarizer_medoid": sum(p.summarizer_fallback for p in pairs)
            }
        if self.synthetic_dir.exists():
            report.setdefault("counts", {})["synthetic_images"] = len(
                sorted(self.synthetic_dir.glob("*/*.png"))
            )
        return report


def run(config: PipelineConfig, force: bool = False, upto: str | None = None) -> dict:
    return Pipeline(config).run(force=force, upto=upto)


def compute_run_metrics(out_dir: os.PathLike | str) -> dict:
    """Recompute prototype metrics from a finished run directory."""
    out = Path(out_dir)
    corpus = Corpus.load(out)
    if corpus.h is None:
        raise FileNotFoundError(f"{out}: no fused features (embeddings/h.edb)")
    buffers = load_buffers(out / "buffers")
    if not buffers:
        raise FileNotFoundError(f"{out}: no cluster buffers")
    protos = [(b.class_id, k, b.centers[k]) for b in buffers for k in range(b.k)]
    return prototype_metrics(corpus.h, corpus.labels, protos)


def _variant_report(
    corpus: Corpus,
    buffers: Sequence[ClusterBuffer],
    features: np.ndarray,
    clients: Clients,
    config: PipelineConfig,
    capacity: int,
    bare_label_prompt: bool,
) -> dict:
    protos = [(b.class_id, k, b.centers[k]) for b in buffers for k in range(b.k)]
    out = {
        "feature_dim": int(features.shape[1]),
        "capacity": capacity,
        "prompt_mode": "class_label" if bare_label_prompt else "text_prototype",
        "metrics": prototype_metrics(features, corpus.labels, protos),
    }
    names = [config.class_name(c) for c in range(max(corpus.class_ids()) + 1)]
    pairs = build_prototypes(
        buffers, corpus, clients, capacity, config.images_root, names
    )
    if bare_label_prompt:
        pairs = [
            replace(p, text_prototype=names[p.class_id], summarizer_fallback=False)
            for p in pairs
        ]
    out["prototype_pairs"] = len(pairs)
    out["summarizer_fallbacks"] = sum(p.summarizer_fallback for p in pairs)
    return out


def ablate(config: PipelineConfig, axes_off: Iterable[str]) -> dict:
    """Compare the full pipeline against a variant with modules disabled.

    Axis semantics: ``gsq`` clusters raw visual embeddings instead of
    fused features; ``lsa`` shrinks every awareness set to the single
    nearest sample; ``dpg`` replaces text prototypes with the bare class
    label. Metrics for both variants are computed in the space each one
    clusters.
    """
    axes = frozenset(axes_off)
    unknown = axes - ABLATION_AXES
    if unknown:
        raise ValueError(
            f"unknown ablation axes {sorted(unknown)}; expected subset of "
            f"{sorted(ABLATION_AXES)}"
        )
    pipeline = Pipeline(config)
    pipeline.run(upto="cluster")
    corpus = Corpus.load(config.out_path)
    full_buffers = load_buffers(pipeline.buffers_dir)

    report = {"axes_off": sorted(axes), "variants": {}}
    report["variants"]["full"] = _variant_report(
        corpus,
        full_buffers,
        corpus.h,
        pipeline.clients,
        config,
        config.awareness_capacity,
        bare_label_prompt=False,
    )

    if "gsq" in axes:
        features = corpus.fv
        buffers = build_buffer(
            corpus,
            config.ipc,
            config.seed,
            max_iter=config.kmeans.max_iter,
            tol=config.kmeans.tol,
            restarts=config.kmeans.restarts,
            features=features,
        )
    else:
        features = corpus.h
        buffers = full_buffers
    report["variants"]["ablated"] = _variant_report(
        corpus,
        buffers,
        features,
        pipeline.clients,
        config,
        1 if "lsa" in axes else config.awareness_capacity,
        bare_label_prompt="dpg" in axes,
    )
    with open(config.out_path / "ablate_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    return report
