"""Dataset distillation toolkit.

Builds a compact synthetic image set from a captioned corpus in four
steps: caption-driven fusion of visual and textual embeddings, per-class
k-means prior buffers, awareness-set image/text prototype construction,
and prototype-guided generation through a pluggable diffusion service.
All model services (captioner, embedder, summarizer, VAE/diffusion) sit
behind wire clients with deterministic offline mocks, so every stage is
reproducible without network access.
"""

__version__ = "0.1.0"

from edits.config import PipelineConfig
from edits.corpus import Corpus
from edits.manifest import SampleRecord

__all__ = ["Corpus", "PipelineConfig", "SampleRecord", "__version__"]
