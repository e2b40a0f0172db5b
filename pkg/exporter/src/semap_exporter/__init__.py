"""Bridge from real models to the semap binary formats."""

from .formats import (
    ExporterError,
    read_labels,
    write_embedding_file,
    write_labels,
    write_logit_file,
)
from .logits import dataset_label_names, export_dataset_labels, export_logits
from .text_embeddings import apply_template, export_text_embeddings, make_clip_encoder

__version__ = "0.1.0"
