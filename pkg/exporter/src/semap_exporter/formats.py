"""Writers for the semap binary formats and the label text format.

The layouts are the public data contract of the primary package:

* embeddings: magic ``SEMAPEMB``, u32 rows, u32 dim, rows*dim little-endian f32
* logits:     magic ``SEMAPLGT``, u32 N, u32 n, u8 label flag, N*n f32,
              then N u32 labels when the flag is 1
* labels:     UTF-8 text, one label per line, newline-terminated

Every write is atomic: a temp file in the target directory, then rename.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np


class ExporterError(RuntimeError):
    """Raised for unusable inputs, failed model loads, or bad outputs."""


def _atomic_write(path: Path, blob: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_labels(path: str | Path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise ExporterError(f"{path}: file not found")
    text = path.read_bytes().decode("utf-8")
    if not text.endswith("\n"):
        raise ExporterError(f"{path}: label file must be newline-terminated")
    names = []
    seen = set()
    for lineno, raw in enumerate(text.split("\n")[:-1], start=1):
        name = raw.rstrip()
        if not name:
            raise ExporterError(f"{path}: blank label at line {lineno}")
        if name in seen:
            raise ExporterError(f"{path}: duplicate label {name!r} at line {lineno}")
        seen.add(name)
        names.append(name)
    if not names:
        raise ExporterError(f"{path}: no labels")
    return names


def write_labels(path: str | Path, names: list[str]) -> None:
    if not names or any(not n or n != n.rstrip() for n in names):
        raise ExporterError("labels must be non-empty with no trailing whitespace")
    if len(set(names)) != len(names):
        raise ExporterError("duplicate labels")
    _atomic_write(Path(path), ("\n".join(names) + "\n").encode("utf-8"))


def write_embedding_file(path: str | Path, vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors)
    if vectors.ndim != 2 or vectors.size == 0:
        raise ExporterError("embeddings must be a non-empty 2-D array")
    if not np.all(np.isfinite(vectors)):
        raise ExporterError("embeddings contain non-finite values")
    rows, dim = vectors.shape
    blob = b"SEMAPEMB" + struct.pack("<II", rows, dim)
    blob += vectors.astype("<f4").tobytes()
    _atomic_write(Path(path), blob)


def write_logit_file(path: str | Path, scores: np.ndarray, labels: np.ndarray | None) -> None:
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.size == 0:
        raise ExporterError("scores must be a non-empty 2-D array")
    if not np.all(np.isfinite(scores)):
        raise ExporterError("scores contain non-finite values")
    count, width = scores.shape
    flag = 0 if labels is None else 1
    if flag:
        labels = np.asarray(labels)
        if labels.shape != (count,):
            raise ExporterError(f"expected {count} labels, got shape {labels.shape}")
        if labels.min() < 0:
            raise ExporterError("labels must be non-negative")
    blob = b"SEMAPLGT" + struct.pack("<IIB", count, width, flag)
    blob += scores.astype("<f4").tobytes()
    if flag:
        blob += labels.astype("<u4").tobytes()
    _atomic_write(Path(path), blob)
