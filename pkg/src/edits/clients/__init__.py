"""Wire clients for the caption, embedding, summarizer, and VAE/diffusion
services, with deterministic offline mocks, caching, and bounded retry."""

from edits.clients.base import (
    ClientError,
    ContentCache,
    HandshakeError,
    ServiceEndpoint,
    ServiceError,
    ServiceHandshake,
    TransportError,
)
from edits.clients.mock import MockTransport
from edits.clients.noise import add_noise, alphabar_schedule
from edits.clients.prompts import build_caption_prompt
from edits.clients.services import (
    CaptionClient,
    Clients,
    EmbedClient,
    GenerationClient,
    GenerationRequest,
    SummarizerClient,
    VaeClient,
)
from edits.clients.transport import HttpTransport, Transport

__all__ = [
    "CaptionClient",
    "ClientError",
    "Clients",
    "ContentCache",
    "EmbedClient",
    "GenerationClient",
    "GenerationRequest",
    "HandshakeError",
    "HttpTransport",
    "MockTransport",
    "ServiceEndpoint",
    "ServiceError",
    "ServiceHandshake",
    "SummarizerClient",
    "Transport",
    "TransportError",
    "VaeClient",
    "add_noise",
    "alphabar_schedule",
    "build_caption_prompt",
]
