"""Shared client machinery: endpoints, handshakes, cache, retry, codec.

Wire format: every request and response is a flat key-value JSON object.
Binary payloads (image bytes, float32 latent buffers) travel base64-
encoded inline when smaller than 1 MiB, otherwise as a temporary-file
reference under ``<field>_path``. Service errors arrive as a flat
envelope with ``error_code`` and ``error_message``.

Cache entries are keyed by content hashes (never by file paths and never
by secret material) and live at ``<root>/<service>/<hash[:2]>/<hash>.json``.
Reads are lock-free; writes go through a temp file plus atomic rename
under a process-local lock.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

__all__ = [
    "INLINE_LIMIT",
    "ClientError",
    "TransportError",
    "ServiceError",
    "HandshakeError",
    "ServiceEndpoint",
    "ServiceHandshake",
    "content_key",
    "pack_binary",
    "unpack_binary",
    "ContentCache",
    "call_with_retry",
]

INLINE_LIMIT = 1 << 20  # 1 MiB


class ClientError(Exception):
    pass


class TransportError(ClientError):
    """Connection-level failure; eligible for retry."""


class ServiceError(ClientError):
    """Failure reported by the service itself; not retried."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class HandshakeError(ClientError):
    """Declared service shape does not match the data at hand."""


@dataclass(frozen=True)
class ServiceEndpoint:
    """Where and how to reach one model service.

    ``auth_env`` names the environment variable holding the bearer token;
    the secret itself is resolved only at call time and never stored.
    """

    base_url: str = ""
    auth_env: str = ""
    timeout_s: float = 30.0
    max_retries: int = 2
    backoff_base_ms: float = 250.0
    max_concurrency: int = 4

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError(f"timeout_s must be positive, got {self.timeout_s}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")

    def to_dict(self) -> dict:
        return {
            "base_url": self.base_url,
            "auth_env": self.auth_env,
            "timeout_s": self.timeout_s,
            "max_retries": self.max_retries,
            "backoff_base_ms": self.backoff_base_ms,
            "max_concurrency": self.max_concurrency,
        }


@dataclass(frozen=True)
class ServiceHandshake:
    """Shapes and schedule the services declare before any data flows."""

    embed_dim: int = 64
    latent_shape: tuple[int, int, int] = (4, 32, 32)
    encoder_id: str = "vae-mock"
    total_steps: int = 50
    alphabar_final: float = 0.01

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "latent_shape": "x".join(str(s) for s in self.latent_shape),
            "encoder_id": self.encoder_id,
            "total_steps": self.total_steps,
            "alphabar_final": self.alphabar_final,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ServiceHandshake":
        return cls(
            embed_dim=int(obj["embed_dim"]),
            latent_shape=tuple(int(s) for s in str(obj["latent_shape"]).split("x")),
            encoder_id=str(obj["encoder_id"]),
            total_steps=int(obj["total_steps"]),
            alphabar_final=float(obj["alphabar_final"]),
        )


def content_key(*parts: bytes | str | int | float) -> str:
    """Order-sensitive sha256 over content pieces; safe for cache keys."""
    digest = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            digest.update(b"b")
            digest.update(part)
        else:
            digest.update(b"s")
            digest.update(str(part).encode("utf-8"))
        digest.update(b"\x1f")
    return digest.hexdigest()


def pack_binary(payload: dict, field: str, data: bytes, tmp_dir=None) -> dict:
    """Attach ``data`` inline (base64) or as a temp-file reference."""
    if len(data) < INLINE_LIMIT:
        payload[f"{field}_b64"] = base64.b64encode(data).decode("ascii")
    else:
        fd, path = tempfile.mkstemp(prefix=f"{field}_", suffix=".bin", dir=tmp_dir)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        payload[f"{field}_path"] = path
    return payload


def unpack_binary(payload: dict, field: str) -> bytes:
    inline = payload.get(f"{field}_b64")
    if inline is not None:
        return base64.b64decode(inline)
    path = payload.get(f"{field}_path")
    if path is not None:
        return Path(path).read_bytes()
    raise ServiceError("missing_field", f"no {field}_b64 or {field}_path in payload")


class ContentCache:
    """Content-addressed response cache shared by all clients."""

    def __init__(self, root: os.PathLike | str):
        self.root = Path(root)
        self._lock = threading.Lock()

    def path_for(self, service: str, key: str) -> Path:
        return self.root / service / key[:2] / f"{key}.json"

    def get(self, service: str, key: str) -> dict | None:
        path = self.path_for(service, key)
        if not path.exists():
            return None
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)

    def put(self, service: str, key: str, value: dict) -> None:
        path = self.path_for(service, key)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(value, fh, ensure_ascii=False)
            tmp.replace(path)


def call_with_retry(
    call: Callable[[str, dict], dict],
    method: str,
    payload: dict,
    endpoint: ServiceEndpoint,
    sleep: Callable[[float], None] = time.sleep,
) -> dict:
    """Run ``call`` with exactly ``max_retries + 1`` attempts.

    Only :class:`TransportError` triggers a retry; the backoff before
    attempt i+1 is ``backoff_base_ms * 2**i`` milliseconds.
    """
    attempts = endpoint.max_retries + 1
    for attempt in range(attempts):
        try:
            return call(method, payload)
        except TransportError:
            if attempt + 1 == attempts:
                raise
            sleep(endpoint.backoff_base_ms * (2.0**attempt) / 1000.0)
    raise AssertionError("unreachable")
