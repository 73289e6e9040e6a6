"""Prompt template for the captioning service."""

from __future__ import annotations

__all__ = ["CAPTION_PROMPT_OPENING", "CAPTION_PROMPT_STRUCTURE", "build_caption_prompt"]

CAPTION_PROMPT_OPENING = (
    "Generate an extremely detailed and vivid caption for this image {class_label}."
)

# The opening line above is the contract-pinned part of the template; the
# structure clause is this project's own completion and may be tuned.
CAPTION_PROMPT_STRUCTURE = (
    "Follow this structure: main subject and its action; setting and "
    "background; colors, textures and lighting; distinctive fine details."
)


def build_caption_prompt(class_label: str) -> str:
    opening = CAPTION_PROMPT_OPENING.format(class_label=class_label)
    return f"{opening}\n{CAPTION_PROMPT_STRUCTURE}"
