"""Typed clients for the four model services.

Each client wraps a transport with content-addressed caching, a bounded
concurrent-request cap, and retry with exponential backoff on transport
failures. ``n`` identical calls cost one transport operation plus
``n - 1`` cache hits. Cache keys are content hashes; auth tokens are
resolved from the environment inside the transport and never reach keys,
logs, or manifests.
"""

from __future__ import annotations

import base64
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from edits.clients.base import (
    ContentCache,
    HandshakeError,
    ServiceEndpoint,
    ServiceError,
    ServiceHandshake,
    call_with_retry,
    content_key,
    pack_binary,
)
from edits.clients.mock import MockTransport
from edits.clients.prompts import build_caption_prompt
from edits.clients.transport import HttpTransport, Transport

__all__ = [
    "GenerationRequest",
    "CaptionClient",
    "EmbedClient",
    "SummarizerClient",
    "VaeClient",
    "GenerationClient",
    "Clients",
]


def _shape_str(shape: tuple[int, ...]) -> str:
    return "x".join(str(s) for s in shape)


@dataclass(frozen=True)
class GenerationRequest:
    """One guided-generation job: noised image prototype + text prototype."""

    init_latent: np.ndarray
    prompt: str
    num_steps: int = 50
    guidance_scale: float = 7.5
    scheduler_id: str = "ddim"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_steps < 1:
            raise ValueError(f"num_steps must be >= 1, got {self.num_steps}")
        if self.guidance_scale < 0:
            raise ValueError(
                f"guidance_scale must be >= 0, got {self.guidance_scale}"
            )

    def check_shape(self, handshake: ServiceHandshake) -> None:
        shape = tuple(self.init_latent.shape)
        if shape != handshake.latent_shape:
            raise HandshakeError(
                f"latent shape {_shape_str(shape)} does not match declared "
                f"{_shape_str(handshake.latent_shape)}"
            )


class _BaseClient:
    service = "service"

    def __init__(
        self,
        transport: Transport,
        cache: ContentCache | None = None,
        endpoint: ServiceEndpoint | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.transport = transport
        self.cache = cache
        self.endpoint = endpoint or ServiceEndpoint()
        self.sleep = sleep
        self._sem = threading.BoundedSemaphore(self.endpoint.max_concurrency)
        self._handshake: ServiceHandshake | None = None

    @property
    def is_mock(self) -> bool:
        return getattr(self.transport, "is_mock", False)

    def handshake(self) -> ServiceHandshake:
        if self._handshake is None:
            with self._sem:
                body = call_with_retry(
                    self.transport.call, "handshake", {}, self.endpoint, self.sleep
                )
            self._handshake = ServiceHandshake.from_dict(body)
        return self._handshake

    def _call(self, method: str, payload: dict, cache_key: str | None = None) -> dict:
        if cache_key is not None and self.cache is not None:
            hit = self.cache.get(self.service, cache_key)
            if hit is not None:
                return hit
        with self._sem:
            body = call_with_retry(
                self.transport.call, method, payload, self.endpoint, self.sleep
            )
        if cache_key is not None and self.cache is not None:
            self.cache.put(self.service, cache_key, body)
        return body


class CaptionClient(_BaseClient):
    service = "caption"

    def caption(self, image_path: os.PathLike | str, class_label: str) -> str:
        data = Path(image_path).read_bytes()
        prompt = build_caption_prompt(class_label)
        key = content_key("caption", data, class_label, prompt)
        payload = pack_binary(
            {"class_label": class_label, "prompt": prompt}, "image", data
        )
        body = self._call("caption", payload, key)
        text = str(body.get("caption", ""))
        if not text:
            raise ServiceError("empty_caption", f"no caption for {image_path}")
        return text


class EmbedClient(_BaseClient):
    service = "embed"

    def _decode_vector(self, body: dict, context: str) -> np.ndarray:
        vec = np.frombuffer(base64.b64decode(body["vector_b64"]), dtype="<f4")
        expected = self.handshake().embed_dim
        if vec.size != expected:
            raise HandshakeError(
                f"{context}: got {vec.size}-dim vector, service declared {expected}"
            )
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        key = content_key("embed_text", text)
        body = self._call("embed_text", {"text": text}, key)
        return self._decode_vector(body, f"text {text[:40]!r}")

    def embed_image(self, image_path: os.PathLike | str) -> np.ndarray:
        data = Path(image_path).read_bytes()
        key = content_key("embed_image", data)
        payload = pack_binary({}, "image", data)
        body = self._call("embed_image", payload, key)
        return self._decode_vector(body, f"image {image_path}")

    def embed_texts(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            raise ValueError("empty batch")
        rows = []
        for i, text in enumerate(texts):
            try:
                rows.append(self.embed_text(text))
            except ServiceError as exc:
                raise ServiceError(exc.code, f"batch item {i}: {exc.message}") from exc
        return np.stack(rows)

    def embed_images(self, paths: Sequence[os.PathLike | str]) -> np.ndarray:
        if not paths:
            raise ValueError("empty batch")
        rows = []
        for i, path in enumerate(paths):
            try:
                rows.append(self.embed_image(path))
            except ServiceError as exc:
                raise ServiceError(exc.code, f"batch item {i}: {exc.message}") from exc
        return np.stack(rows)


class SummarizerClient(_BaseClient):
    service = "summarize"

    def summarize(self, prompt: str) -> str:
        key = content_key("summarize", prompt)
        body = self._call("summarize", {"prompt": prompt}, key)
        return str(body.get("summary", ""))


class VaeClient(_BaseClient):
    service = "vae"

    def encode(self, image_path: os.PathLike | str) -> np.ndarray:
        data = Path(image_path).read_bytes()
        hs = self.handshake()
        key = content_key("vae_encode", data, hs.encoder_id)
        payload = pack_binary({}, "image", data)
        body = self._call("vae_encode", payload, key)
        shape = tuple(int(s) for s in str(body["shape"]).split("x"))
        if shape != hs.latent_shape:
            raise HandshakeError(
                f"service returned latent shape {_shape_str(shape)}, declared "
                f"{_shape_str(hs.latent_shape)}"
            )
        raw = base64.b64decode(body["latent_b64"])
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    def decode(self, latent: np.ndarray) -> bytes:
        hs = self.handshake()
        lat = np.ascontiguousarray(latent, dtype="<f4")
        if tuple(lat.shape) != hs.latent_shape:
            raise HandshakeError(
                f"latent shape {_shape_str(tuple(lat.shape))} does not match "
                f"declared {_shape_str(hs.latent_shape)}"
            )
        data = lat.tobytes()
        key = content_key("vae_decode", data, hs.encoder_id)
        payload = pack_binary({"shape": _shape_str(hs.latent_shape)}, "latent", data)
        body = self._call("vae_decode", payload, key)
        return base64.b64decode(body["image_b64"])


class GenerationClient(_BaseClient):
    service = "generate"

    def generate(self, request: GenerationRequest) -> tuple[bytes, np.ndarray]:
        hs = self.handshake()
        request.check_shape(hs)
        lat = np.ascontiguousarray(request.init_latent, dtype="<f4")
        data = lat.tobytes()
        key = content_key(
            "generate",
            data,
            request.prompt,
            request.num_steps,
            request.guidance_scale,
            request.scheduler_id,
            request.seed,
        )
        payload = pack_binary(
            {
                "shape": _shape_str(hs.latent_shape),
                "prompt": request.prompt,
                "num_steps": request.num_steps,
                "guidance_scale": request.guidance_scale,
                "scheduler_id": request.scheduler_id,
                "seed": request.seed,
            },
            "init_latent",
            data,
        )
        body = self._call("generate", payload, key)
        image = base64.b64decode(body["image_b64"])
        final = (
            np.frombuffer(base64.b64decode(body["final_latent_b64"]), dtype="<f4")
            .reshape(hs.latent_shape)
            .copy()
        )
        return image, final


@dataclass
class Clients:
    """The client bundle one pipeline run works with."""

    caption: CaptionClient
    embed: EmbedClient
    summarize: SummarizerClient
    vae: VaeClient
    generate: GenerationClient

    @classmethod
    def mock(
        cls,
        seed: int,
        handshake: ServiceHandshake | None = None,
        cache: ContentCache | None = None,
    ) -> "Clients":
        transport = MockTransport(seed=seed, handshake=handshake)
        return cls(
            caption=CaptionClient(transport, cache),
            embed=EmbedClient(transport, cache),
            summarize=SummarizerClient(transport, cache),
            vae=VaeClient(transport, cache),
            generate=GenerationClient(transport, cache),
        )

    @classmethod
    def live(
        cls,
        endpoints: dict[str, ServiceEndpoint],
        cache: ContentCache | None = None,
    ) -> "Clients":
        def make(name: str, kind):
            endpoint = endpoints.get(name, ServiceEndpoint())
            return kind(HttpTransport(endpoint), cache, endpoint)

        return cls(
            caption=make("caption", CaptionClient),
            embed=make("embed", EmbedClient),
            summarize=make("summarize", SummarizerClient),
            vae=make("vae", VaeClient),
            generate=make("generate", GenerationClient),
        )

    def transports(self) -> list[Transport]:
        seen: list[Transport] = []
        for client in (self.caption, self.embed, self.summarize, self.vae, self.generate):
            if client.transport not in seen:
                seen.append(client.transport)
        return seen

    def transport_calls(self) -> int:
        return sum(t.calls for t in self.transports())
