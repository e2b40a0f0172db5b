"""CLIP text embeddings for label files, written in the semap format.

Labels are formatted into a prompt template ("a photo of a {label}" by
default, underscores rendered as spaces) and pushed through a contrastive
language-image text encoder. Row order matches label-file line order.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .formats import ExporterError, read_labels, write_embedding_file

DEFAULT_TEMPLATE = "a photo of a {label}"
DEFAULT_TEXT_MODEL = "openai/clip-vit-base-patch32"

EncodeFn = Callable[[Sequence[str]], np.ndarray]


def apply_template(names: Sequence[str], template: str) -> list[str]:
    if "{label}" not in template:
        raise ExporterError("template must contain the {label} placeholder")
    return [template.format(label=name.replace("_", " ")) for name in names]


def make_clip_encoder(model_id: str = DEFAULT_TEXT_MODEL, batch_size: int = 64) -> EncodeFn:
    """Load a CLIP text tower (weights must be available locally or fetchable)."""
    try:
        import torch
        from transformers import CLIPTextModelWithProjection, CLIPTokenizer
    except ImportError as exc:  # pragma: no cover - deps are declared
        raise ExporterError(f"transformers/torch unavailable: {exc}") from exc
    try:
        tokenizer = CLIPTokenizer.from_pretrained(model_id)
        model = CLIPTextModelWithProjection.from_pretrained(model_id)
    except Exception as exc:
        raise ExporterError(f"could not load text encoder {model_id!r}: {exc}") from exc
    model.eval()

    def encode(texts: Sequence[str]) -> np.ndarray:
        chunks = []
        with torch.no_grad():
            for lo in range(0, len(texts), batch_size):
                batch = list(texts[lo : lo + batch_size])
                tokens = tokenizer(batch, padding=True, return_tensors="pt")
                out = model(**tokens).text_embeds
                chunks.append(out.cpu().numpy())
        return np.concatenate(chunks, axis=0)

    return encode


def export_text_embeddings(
    labels_path: str | Path,
    out_path: str | Path,
    template: str = DEFAULT_TEMPLATE,
    model_id: str = DEFAULT_TEXT_MODEL,
    encode_fn: EncodeFn | None = None,
) -> int:
    """Write one embedding row per label; returns the row count."""
    names = read_labels(labels_path)
    texts = apply_template(names, template)
    encode = encode_fn if encode_fn is not None else make_clip_encoder(model_id)
    vectors = np.asarray(encode(texts), dtype=np.float32)
    if vectors.ndim != 2 or vectors.shape[0] != len(names):
        raise ExporterError(
            f"encoder returned shape {vectors.shape} for {len(names)} labels"
        )
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    if np.any(norms == 0.0):
        raise ExporterError("encoder produced a zero-norm embedding")
    write_embedding_file(out_path, vectors)
    return len(names)
