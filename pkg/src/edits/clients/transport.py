"""Live HTTP transport for the model services.

One POST per operation: ``{base_url}/{method}`` with a flat JSON body.
Methods and fields:

    handshake    {}                                      -> handshake fields
    caption      {image_b64|image_path, class_label,
                  prompt}                                -> {caption}
    embed_text   {text}                                  -> {vector_b64, dim}
    embed_image  {image_b64|image_path}                  -> {vector_b64, dim}
    summarize    {prompt}                                -> {summary}
    vae_encode   {image_b64|image_path}                  -> {latent_b64, shape}
    vae_decode   {latent_b64|latent_path, shape}         -> {image_b64}
    generate     {init_latent_b64|_path, shape, prompt,
                  num_steps, guidance_scale,
                  scheduler_id, seed}                    -> {image_b64,
                                                             final_latent_b64}

Latent buffers are raw little-endian float32; ``shape`` is e.g. "4x32x32".
Errors come back as ``{error_code, error_message}``. Connection problems
and 5xx responses raise :class:`TransportError` (retried by the caller);
error envelopes and 4xx raise :class:`ServiceError` (not retried).
"""

from __future__ import annotations

import os
from typing import Protocol

import requests

from edits.clients.base import ServiceEndpoint, ServiceError, TransportError

__all__ = ["Transport", "HttpTransport"]


class Transport(Protocol):
    is_mock: bool
    calls: int

    def call(self, method: str, payload: dict) -> dict: ...


class HttpTransport:
    is_mock = False

    def __init__(self, endpoint: ServiceEndpoint):
        self.endpoint = endpoint
        self.calls = 0

    def call(self, method: str, payload: dict) -> dict:
        self.calls += 1
        headers = {}
        if self.endpoint.auth_env:
            token = os.environ.get(self.endpoint.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        url = f"{self.endpoint.base_url.rstrip('/')}/{method}"
        try:
            resp = requests.post(
                url, json=payload, headers=headers, timeout=self.endpoint.timeout_s
            )
        except requests.RequestException as exc:
            raise TransportError(f"{method}: {exc.__class__.__name__}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"{method}: server returned {resp.status_code}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise ServiceError("bad_response", f"{method}: non-JSON body") from exc
        if "error_code" in body:
            raise ServiceError(
                str(body["error_code"]), str(body.get("error_message", ""))
            )
        if resp.status_code >= 400:
            raise ServiceError(f"http_{resp.status_code}", f"{method} rejected")
        return body
