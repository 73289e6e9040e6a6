"""Deterministic offline mock of all four model services.

The mock transport is a pure function of (payload content, mock seed):
captions, embeddings, latents, and generated images derive from sha256
hashes of the inputs fed through named Philox streams, so every call is
byte-reproducible across runs and platforms. Encode/decode are *not*
inverses; the mocks only honor shapes, determinism, and sensitivity
(changing any input changes the output).
"""

from __future__ import annotations

import base64
import hashlib
import io

import numpy as np
from PIL import Image

from edits.clients.base import ServiceError, ServiceHandshake, unpack_binary
from edits.rng import make_rng

__all__ = ["MockTransport"]

_MOCK_IMAGE_SIDE = 16


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _shape_str(shape: tuple[int, ...]) -> str:
    return "x".join(str(s) for s in shape)


def _parse_shape(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.split("x"))


def _latent_to_png(latent: np.ndarray) -> bytes:
    """Small deterministic PNG derived from the latent's content hash."""
    tag = _sha(np.ascontiguousarray(latent, dtype="<f4").tobytes())
    rng = make_rng(0, "mock-png", tag)
    pixels = rng.integers(
        0, 256, size=(_MOCK_IMAGE_SIDE, _MOCK_IMAGE_SIDE, 3), dtype=np.uint8
    )
    img = Image.fromarray(pixels, "RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


class MockTransport:
    """Serves every wire method locally; counts calls like a real transport."""

    is_mock = True

    def __init__(self, seed: int = 0, handshake: ServiceHandshake | None = None):
        self.seed = seed
        self.handshake = handshake or ServiceHandshake()
        self.calls = 0
        self.calls_by_method: dict[str, int] = {}

    def call(self, method: str, payload: dict) -> dict:
        self.calls += 1
        self.calls_by_method[method] = self.calls_by_method.get(method, 0) + 1
        handler = getattr(self, f"_{method}", None)
        if handler is None:
            raise ServiceError("unknown_method", method)
        return handler(payload)

    # -- deterministic primitives -------------------------------------

    def _unit_vector(self, tag: str) -> np.ndarray:
        rng = make_rng(self.seed, "mock-embed", tag)
        vec = rng.standard_normal(self.handshake.embed_dim)
        return (vec / np.sqrt((vec * vec).sum())).astype(np.float32)

    def _latent_from(self, tag: str) -> np.ndarray:
        rng = make_rng(self.seed, "mock-latent", tag)
        return rng.standard_normal(self.handshake.latent_shape).astype(np.float32)

    # -- wire methods ---------------------------------------------------

    def _handshake(self, payload: dict) -> dict:
        return self.handshake.to_dict()

    def _caption(self, payload: dict) -> dict:
        data = unpack_binary(payload, "image")
        label = payload.get("class_label", "")
        return {"caption": f"mock caption {label} {_sha(data)[:8]}"}

    def _embed_text(self, payload: dict) -> dict:
        vec = self._unit_vector("text:" + _sha(str(payload["text"]).encode("utf-8")))
        return {
            "vector_b64": base64.b64encode(vec.tobytes()).decode("ascii"),
            "dim": int(vec.size),
        }

    def _embed_image(self, payload: dict) -> dict:
        data = unpack_binary(payload, "image")
        vec = self._unit_vector("image:" + _sha(data))
        return {
            "vector_b64": base64.b64encode(vec.tobytes()).decode("ascii"),
            "dim": int(vec.size),
        }

    def _summarize(self, payload: dict) -> dict:
        tag = _sha(str(payload["prompt"]).encode("utf-8"))[:8]
        return {"summary": f"mock summary {tag}"}

    def _vae_encode(self, payload: dict) -> dict:
        data = unpack_binary(payload, "image")
        latent = self._latent_from(_sha(data))
        return {
            "latent_b64": base64.b64encode(latent.tobytes()).decode("ascii"),
            "shape": _shape_str(latent.shape),
        }

    def _require_latent(self, payload: dict, field: str) -> np.ndarray:
        shape = _parse_shape(str(payload["shape"]))
        if shape != self.handshake.latent_shape:
            raise ServiceError(
                "shape_mismatch",
                f"latent shape {_shape_str(shape)} does not match declared "
                f"{_shape_str(self.handshake.latent_shape)}",
            )
        raw = unpack_binary(payload, field)
        expected = int(np.prod(shape)) * 4
        if len(raw) != expected:
            raise ServiceError(
                "shape_mismatch", f"latent holds {len(raw)} bytes, expected {expected}"
            )
        return np.frombuffer(raw, dtype="<f4").reshape(shape)

    def _vae_decode(self, payload: dict) -> dict:
        latent = self._require_latent(payload, "latent")
        png = _latent_to_png(latent)
        return {"image_b64": base64.b64encode(png).decode("ascii")}

    def _generate(self, payload: dict) -> dict:
        init = self._require_latent(payload, "init_latent")
        tag = "|".join(
            str(payload.get(k, ""))
            for k in ("prompt", "num_steps", "guidance_scale", "scheduler_id", "seed")
        )
        prompt_tensor = self._latent_from("gen:" + _sha(tag.encode("utf-8")))
        final = (0.5 * init.astype(np.float64) + 0.5 * prompt_tensor).astype(
            np.float32
        )
        png = _latent_to_png(final)
        return {
            "image_b64": base64.b64encode(png).decode("ascii"),
            "final_latent_b64": base64.b64encode(final.tobytes()).decode("ascii"),
        }
